#pragma once

#include <deque>
#include <iosfwd>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "metiskit/env.hpp"

namespace metiskit {

struct VideoSpec {
  double chunk_duration_s = 4.0;
  std::vector<double> bitrates_kbps = {300, 750, 1200, 1850, 2850, 4300};
  int n_chunks = 48;
  double size_jitter = 0.0;  // per-chunk size jitter fraction, 0 disables

  void validate() const;
  // Nominal chunk size; jitter (when enabled) is a deterministic function of
  // (jitter_seed, chunk, rung).
  double chunk_kbits(int chunk, int rung, std::uint64_t jitter_seed) const;

  static VideoSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct TracePoint {
  double time_s = 0.0;
  double bandwidth_kbps = 0.0;
};

// Piecewise-constant bandwidth over time; holds the last sample's value past
// the end of the trace.
struct BandwidthTrace {
  std::string name;
  std::vector<TracePoint> samples;

  void validate() const;
  double bandwidth_at(double t) const;
  // Seconds needed to move `kbits` starting at `start_s`.
  double download_seconds(double start_s, double kbits) const;
};

// CSV rows `timestamp_s,bandwidth_kbps`. Parse errors carry the row number.
BandwidthTrace load_trace(const std::string& path);
BandwidthTrace parse_trace(std::istream& in, const std::string& name);

// kinds: "fixed:<kbps>", "step" / "step:<low>:<high>:<period_s>", "markov".
BandwidthTrace synth_trace(const std::string& kind, std::uint64_t seed);

inline constexpr double kRebufferPenalty = 4.3;

// Linear QoE: q(R) - mu * rebuffer - |q(R) - q(prev)| with q(R) = R in Mbps.
double qoe(double bitrate_kbps, double rebuffer_s, double prev_bitrate_kbps);

// Feature layout of the ABR observation vector.
namespace abr_feature {
inline constexpr int kLastBitrate = 0;      // kbps, 0 before the first chunk
inline constexpr int kThroughputFirst = 1;  // window of 8, oldest first, kbps
inline constexpr int kThroughputWindow = 8;
inline constexpr int kBuffer = 9;           // seconds
inline constexpr int kDownloadTime = 10;    // seconds
inline constexpr int kChunksLeft = 11;
inline constexpr int kCount = 12;
}  // namespace abr_feature

std::vector<std::string> abr_feature_names();

// Chunked-video streaming environment: each step downloads one chunk at the
// chosen rung over the bandwidth trace and returns its QoE as reward.
class AbrEnv : public Environment {
 public:
  AbrEnv(VideoSpec video, BandwidthTrace trace, double buffer_cap_s = 60.0);

  void reset(std::uint64_t seed) override;
  void reseed(std::uint64_t seed) override;
  State observe() const override;
  StepOutcome step(const Action& action) override;
  bool done() const override;
  int action_count() const override;
  std::unique_ptr<Environment> clone() const override;

  // Rebuilds internal state from the observation layout above. The trace
  // cursor is approximated as the play head (exact on constant traces).
  void set_state(const State& s) override;

  const VideoSpec& video() const { return video_; }
  const BandwidthTrace& trace() const { return trace_; }
  double buffer() const { return buffer_s_; }
  double play_head() const { return play_head_s_; }
  double wall_clock() const { return wall_clock_s_; }
  int chunk_index() const { return chunk_index_; }

 private:
  VideoSpec video_;
  BandwidthTrace trace_;
  double buffer_cap_s_;

  int chunk_index_ = 0;
  double buffer_s_ = 0.0;
  double wall_clock_s_ = 0.0;
  double play_head_s_ = 0.0;
  double prev_bitrate_kbps_ = 0.0;
  double last_download_s_ = 0.0;
  std::deque<double> throughput_kbps_;
  std::uint64_t jitter_seed_ = 0;
  bool done_ = false;
};

// Model-predictive teacher: exhaustively scores every bitrate sequence of
// length `lookahead` under a harmonic-mean throughput prediction and picks
// the first action of the best sequence. Ties resolve to the lower rung.
class MpcTeacher : public Policy {
 public:
  explicit MpcTeacher(VideoSpec video, int lookahead = 5,
                      double buffer_cap_s = 60.0);

  Action act(const State& state) const override;
  int lookahead() const { return lookahead_; }

 private:
  int best_rung(const State& state) const;

  VideoSpec video_;
  int lookahead_;
  double buffer_cap_s_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::string, int> cache_;
};

// Bang-bang buffer policy that alternates between two rungs around a buffer
// threshold and emits the middle rung only inside a narrow buffer band.
// Stands in for a mis-trained controller that skips intermediate bitrates.
class OscillatingTeacher : public Policy {
 public:
  struct Params {
    int low_rung = 3;
    int high_rung = 5;
    int mid_rung = 4;
    double buffer_threshold_s = 10.0;
    double band_halfwidth_s = 0.12;
  };

  explicit OscillatingTeacher(Params params) : params_(params) {}
  Action act(const State& state) const override;
  const Params& params() const { return params_; }

 private:
  Params params_;
};

// Pseudo-random discrete policy; the action is a hash of (state, seed) so
// repeated queries at the same state agree.
class RandomPolicy : public Policy {
 public:
  RandomPolicy(int n_actions, std::uint64_t seed)
      : n_actions_(n_actions), seed_(seed) {}
  Action act(const State& state) const override;

 private:
  int n_actions_;
  std::uint64_t seed_;
};

}  // namespace metiskit
