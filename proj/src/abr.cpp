#include "metiskit/abr.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "metiskit/rng.hpp"

namespace metiskit {

void VideoSpec::validate() const {
  if (chunk_duration_s <= 0) throw ValidationError("video: chunk duration must be > 0");
  if (n_chunks < 1) throw ValidationError("video: n_chunks must be >= 1");
  if (bitrates_kbps.empty()) throw ValidationError("video: empty bitrate ladder");
  for (std::size_t i = 0; i + 1 < bitrates_kbps.size(); ++i) {
    if (!(bitrates_kbps[i] < bitrates_kbps[i + 1])) {
      throw ValidationError("video: bitrate ladder must be strictly increasing");
    }
  }
  if (bitrates_kbps.front() <= 0) throw ValidationError("video: bitrates must be > 0");
  if (size_jitter < 0 || size_jitter >= 1) {
    throw ValidationError("video: size_jitter must be in [0, 1)");
  }
}

double VideoSpec::chunk_kbits(int chunk, int rung, std::uint64_t jitter_seed) const {
  double kbits = bitrates_kbps[static_cast<std::size_t>(rung)] * chunk_duration_s;
  if (size_jitter > 0.0) {
    Rng r = Rng::stream(jitter_seed, Rng::mix(static_cast<std::uint64_t>(chunk),
                                              static_cast<std::uint64_t>(rung)));
    kbits *= 1.0 + size_jitter * (2.0 * r.uniform() - 1.0);
  }
  return kbits;
}

VideoSpec VideoSpec::from_json(const nlohmann::json& j) {
  VideoSpec v;
  v.chunk_duration_s = j.at("chunk_duration_s").get<double>();
  v.bitrates_kbps = j.at("bitrates_kbps").get<std::vector<double>>();
  v.n_chunks = j.at("n_chunks").get<int>();
  v.size_jitter = j.value("jitter", 0.0);
  v.validate();
  return v;
}

nlohmann::json VideoSpec::to_json() const {
  return nlohmann::json{{"chunk_duration_s", chunk_duration_s},
                        {"bitrates_kbps", bitrates_kbps},
                        {"n_chunks", n_chunks},
                        {"jitter", size_jitter}};
}

void BandwidthTrace::validate() const {
  if (samples.empty()) throw ValidationError("trace: no samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].bandwidth_kbps > 0)) {
      throw ValidationError("trace: bandwidth must be > 0 (sample " +
                            std::to_string(i) + ")");
    }
    if (i > 0 && !(samples[i - 1].time_s < samples[i].time_s)) {
      throw ValidationError("trace: timestamps must be strictly increasing (sample " +
                            std::to_string(i) + ")");
    }
  }
}

double BandwidthTrace::bandwidth_at(double t) const {
  if (t <= samples.front().time_s) return samples.front().bandwidth_kbps;
  // Last sample whose timestamp is <= t.
  auto it = std::upper_bound(
      samples.begin(), samples.end(), t,
      [](double v, const TracePoint& p) { return v < p.time_s; });
  return std::prev(it)->bandwidth_kbps;
}

double BandwidthTrace::download_seconds(double start_s, double kbits) const {
  if (kbits <= 0) return 0.0;
  double t = start_s;
  double remaining = kbits;
  auto it = std::upper_bound(
      samples.begin(), samples.end(), t,
      [](double v, const TracePoint& p) { return v < p.time_s; });
  std::size_t seg = static_cast<std::size_t>(std::distance(samples.begin(), it));
  seg = seg == 0 ? 0 : seg - 1;
  for (;;) {
    const double bw = samples[seg].bandwidth_kbps;
    const bool last = seg + 1 >= samples.size();
    const double seg_end = last ? std::numeric_limits<double>::infinity()
                                : samples[seg + 1].time_s;
    const double span = seg_end - t;
    const double can_move = bw * span;
    if (can_move >= remaining || last) {
      return (t + remaining / bw) - start_s;
    }
    remaining -= can_move;
    t = seg_end;
    ++seg;
  }
}

BandwidthTrace parse_trace(std::istream& in, const std::string& name) {
  BandwidthTrace trace;
  trace.name = name;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string ts, bw;
    if (!std::getline(ls, ts, ',') || !std::getline(ls, bw)) {
      throw ParseError(name + ": row " + std::to_string(row) +
                       ": expected `timestamp_s,bandwidth_kbps`");
    }
    TracePoint p;
    try {
      p.time_s = std::stod(ts);
      p.bandwidth_kbps = std::stod(bw);
    } catch (const std::exception&) {
      throw ParseError(name + ": row " + std::to_string(row) + ": not a number");
    }
    if (!trace.samples.empty() && !(trace.samples.back().time_s < p.time_s)) {
      throw ParseError(name + ": row " + std::to_string(row) +
                       ": timestamps must be strictly increasing");
    }
    if (!(p.bandwidth_kbps > 0)) {
      throw ParseError(name + ": row " + std::to_string(row) +
                       ": bandwidth must be > 0");
    }
    trace.samples.push_back(p);
  }
  trace.validate();
  return trace;
}

BandwidthTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open trace file");
  return parse_trace(in, path);
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

}  // namespace

BandwidthTrace synth_trace(const std::string& kind, std::uint64_t seed) {
  const auto parts = split(kind, ':');
  BandwidthTrace trace;
  trace.name = kind;

  if (parts.empty()) throw DomainError("synth_trace: empty kind");
  if (parts[0] == "fixed") {
    if (parts.size() != 2) throw DomainError("synth_trace: expected fixed:<kbps>");
    double kbps = std::stod(parts[1]);
    if (!(kbps > 0)) throw DomainError("synth_trace: fixed rate must be > 0");
    trace.samples.push_back({0.0, kbps});
  } else if (parts[0] == "step") {
    double low = 1000.0, high = 4000.0, period = 40.0;
    if (parts.size() == 4) {
      low = std::stod(parts[1]);
      high = std::stod(parts[2]);
      period = std::stod(parts[3]);
    } else if (parts.size() != 1) {
      throw DomainError("synth_trace: expected step or step:<low>:<high>:<period_s>");
    }
    // Seed jitters the phase so distinct seeds give distinct alternations.
    Rng r = Rng::stream(seed, 0xabc);
    double t = 0.0;
    double phase = r.uniform(0.0, period);
    bool high_first = r.next() % 2 == 0;
    trace.samples.push_back({0.0, high_first ? high : low});
    t = phase;
    bool level_high = !high_first;
    for (; t < 4000.0; t += period) {
      trace.samples.push_back({t, level_high ? high : low});
      level_high = !level_high;
    }
  } else if (parts[0] == "markov") {
    if (parts.size() != 1) throw DomainError("synth_trace: expected markov");
    static const double levels[] = {600, 1100, 1900, 2900, 4200, 5200};
    const int n_levels = 6;
    Rng r = Rng::stream(seed, 0x51e);
    int level = static_cast<int>(r.below(n_levels));
    const double dwell = 12.0;
    for (double t = 0.0; t < 4000.0; t += dwell) {
      trace.samples.push_back({t, levels[level]});
      double u = r.uniform();
      if (u < 0.3 && level > 0) {
        --level;
      } else if (u > 0.7 && level + 1 < n_levels) {
        ++level;
      }
    }
  } else {
    throw DomainError("synth_trace: unknown kind `" + parts[0] + "`");
  }
  trace.validate();
  return trace;
}

double qoe(double bitrate_kbps, double rebuffer_s, double prev_bitrate_kbps) {
  const double q = bitrate_kbps / 1000.0;
  const double q_prev = prev_bitrate_kbps / 1000.0;
  return q - kRebufferPenalty * rebuffer_s - std::abs(q - q_prev);
}

std::vector<std::string> abr_feature_names() {
  std::vector<std::string> names;
  names.reserve(abr_feature::kCount);
  names.push_back("last_bitrate_kbps");
  for (int i = 0; i < abr_feature::kThroughputWindow; ++i) {
    names.push_back("throughput_kbps_" + std::to_string(i));
  }
  names.push_back("buffer_s");
  names.push_back("last_download_s");
  names.push_back("chunks_left");
  return names;
}

AbrEnv::AbrEnv(VideoSpec video, BandwidthTrace trace, double buffer_cap_s)
    : video_(std::move(video)),
      trace_(std::move(trace)),
      buffer_cap_s_(buffer_cap_s) {
  video_.validate();
  trace_.validate();
  if (buffer_cap_s_ <= 0) throw ValidationError("abr: buffer cap must be > 0");
  reset(0);
}

void AbrEnv::reset(std::uint64_t seed) {
  chunk_index_ = 0;
  buffer_s_ = 0.0;
  wall_clock_s_ = 0.0;
  play_head_s_ = 0.0;
  prev_bitrate_kbps_ = 0.0;
  last_download_s_ = 0.0;
  throughput_kbps_.assign(abr_feature::kThroughputWindow, 0.0);
  jitter_seed_ = seed;
  done_ = false;
}

void AbrEnv::reseed(std::uint64_t seed) { jitter_seed_ = seed; }

State AbrEnv::observe() const {
  State s(abr_feature::kCount, 0.0);
  s[abr_feature::kLastBitrate] = prev_bitrate_kbps_;
  for (int i = 0; i < abr_feature::kThroughputWindow; ++i) {
    s[abr_feature::kThroughputFirst + i] = throughput_kbps_[static_cast<std::size_t>(i)];
  }
  s[abr_feature::kBuffer] = buffer_s_;
  s[abr_feature::kDownloadTime] = last_download_s_;
  s[abr_feature::kChunksLeft] = video_.n_chunks - chunk_index_;
  return s;
}

StepOutcome AbrEnv::step(const Action& action) {
  if (done_) throw DomainError("abr: step on a finished episode");
  if (!action.is_discrete() ||
      action.index >= static_cast<int>(video_.bitrates_kbps.size())) {
    throw DomainError("abr: action must index the bitrate ladder");
  }

  const double kbits = video_.chunk_kbits(chunk_index_, action.index, jitter_seed_);
  const double bitrate = video_.bitrates_kbps[static_cast<std::size_t>(action.index)];
  const double dl = trace_.download_seconds(wall_clock_s_, kbits);
  const double rebuffer = std::max(dl - buffer_s_, 0.0);

  play_head_s_ += std::min(buffer_s_, dl);
  buffer_s_ = std::min(std::max(buffer_s_ - dl, 0.0) + video_.chunk_duration_s,
                       buffer_cap_s_);
  wall_clock_s_ += dl;

  const bool first_chunk = chunk_index_ == 0;
  const double prev = first_chunk ? bitrate : prev_bitrate_kbps_;
  StepOutcome out;
  out.reward = qoe(bitrate, first_chunk ? 0.0 : rebuffer, prev);

  throughput_kbps_.pop_front();
  throughput_kbps_.push_back(dl > 0 ? kbits / dl : 0.0);
  prev_bitrate_kbps_ = bitrate;
  last_download_s_ = dl;
  ++chunk_index_;

  if (chunk_index_ >= video_.n_chunks) {
    done_ = true;
    // Remaining buffer plays out after the last download.
    play_head_s_ += buffer_s_;
    wall_clock_s_ += buffer_s_;
    buffer_s_ = 0.0;
  }
  out.done = done_;
  return out;
}

bool AbrEnv::done() const { return done_; }

int AbrEnv::action_count() const {
  return static_cast<int>(video_.bitrates_kbps.size());
}

std::unique_ptr<Environment> AbrEnv::clone() const {
  return std::make_unique<AbrEnv>(*this);
}

void AbrEnv::set_state(const State& s) {
  if (static_cast<int>(s.size()) != abr_feature::kCount) {
    throw UnsupportedStateError("abr: state has wrong dimension");
  }
  for (double v : s) {
    if (!std::isfinite(v)) throw UnsupportedStateError("abr: non-finite state entry");
  }
  const double chunks_left = s[abr_feature::kChunksLeft];
  const double buffer = s[abr_feature::kBuffer];
  if (chunks_left < 0 || chunks_left > video_.n_chunks ||
      chunks_left != std::floor(chunks_left)) {
    throw UnsupportedStateError("abr: invalid chunks_left");
  }
  if (buffer < 0 || buffer > buffer_cap_s_) {
    throw UnsupportedStateError("abr: buffer out of range");
  }
  for (int i = 0; i < abr_feature::kThroughputWindow; ++i) {
    if (s[abr_feature::kThroughputFirst + i] < 0) {
      throw UnsupportedStateError("abr: negative throughput entry");
    }
  }

  chunk_index_ = video_.n_chunks - static_cast<int>(chunks_left);
  buffer_s_ = buffer;
  prev_bitrate_kbps_ = s[abr_feature::kLastBitrate];
  last_download_s_ = s[abr_feature::kDownloadTime];
  throughput_kbps_.clear();
  for (int i = 0; i < abr_feature::kThroughputWindow; ++i) {
    throughput_kbps_.push_back(s[abr_feature::kThroughputFirst + i]);
  }
  // Trace cursor approximation: downloaded content minus buffered content.
  play_head_s_ = std::max(chunk_index_ * video_.chunk_duration_s - buffer_s_, 0.0);
  wall_clock_s_ = play_head_s_;
  done_ = chunk_index_ >= video_.n_chunks;
}

MpcTeacher::MpcTeacher(VideoSpec video, int lookahead, double buffer_cap_s)
    : video_(std::move(video)), lookahead_(lookahead), buffer_cap_s_(buffer_cap_s) {
  video_.validate();
  if (lookahead_ < 1) throw DomainError("mpc: lookahead must be >= 1");
}

Action MpcTeacher::act(const State& state) const {
  std::string key(reinterpret_cast<const char*>(state.data()),
                  state.size() * sizeof(double));
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return Action::discrete(it->second);
  }
  int rung = best_rung(state);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_.emplace(std::move(key), rung);
  }
  return Action::discrete(rung);
}

int MpcTeacher::best_rung(const State& state) const {
  const int n_rungs = static_cast<int>(video_.bitrates_kbps.size());
  const int remaining = static_cast<int>(state[abr_feature::kChunksLeft]);
  const int depth = std::max(1, std::min(lookahead_, remaining));
  const bool episode_start = remaining >= video_.n_chunks;

  // Harmonic mean of up to the last 5 observed (nonzero) throughputs.
  double inv_sum = 0.0;
  int n_obs = 0;
  for (int i = abr_feature::kThroughputWindow - 1;
       i >= 0 && n_obs < 5; --i) {
    double tp = state[abr_feature::kThroughputFirst + i];
    if (tp > 0) {
      inv_sum += 1.0 / tp;
      ++n_obs;
    }
  }
  const double predicted_kbps =
      n_obs > 0 ? n_obs / inv_sum : video_.bitrates_kbps.front();

  double best_score = -std::numeric_limits<double>::infinity();
  int best_first = 0;

  // Depth-first enumeration in ascending rung order; strict improvement keeps
  // the lexicographically smallest optimum, so ties fall to the lower rung.
  std::vector<int> seq(static_cast<std::size_t>(depth), 0);
  auto recurse = [&](auto&& self, int level, double buffer, double prev_kbps,
                     double score) -> void {
    if (level == depth) {
      if (score > best_score) {
        best_score = score;
        best_first = seq[0];
      }
      return;
    }
    for (int rung = 0; rung < n_rungs; ++rung) {
      seq[static_cast<std::size_t>(level)] = rung;
      const double bitrate = video_.bitrates_kbps[static_cast<std::size_t>(rung)];
      const double kbits = bitrate * video_.chunk_duration_s;
      const double dl = kbits / predicted_kbps;
      const double rebuffer = std::max(dl - buffer, 0.0);
      const double next_buffer =
          std::min(std::max(buffer - dl, 0.0) + video_.chunk_duration_s,
                   buffer_cap_s_);
      const bool first_chunk = episode_start && level == 0;
      const double effective_prev =
          (first_chunk || prev_kbps <= 0) ? bitrate : prev_kbps;
      const double step_qoe =
          qoe(bitrate, first_chunk ? 0.0 : rebuffer, effective_prev);
      self(self, level + 1, next_buffer, bitrate, score + step_qoe);
    }
  };
  recurse(recurse, 0, state[abr_feature::kBuffer],
          state[abr_feature::kLastBitrate], 0.0);
  return best_first;
}

Action OscillatingTeacher::act(const State& state) const {
  const double buffer = state[abr_feature::kBuffer];
  if (std::abs(buffer - params_.buffer_threshold_s) <= params_.band_halfwidth_s) {
    return Action::discrete(params_.mid_rung);
  }
  return Action::discrete(buffer <= params_.buffer_threshold_s ? params_.low_rung
                                                               : params_.high_rung);
}

Action RandomPolicy::act(const State& state) const {
  std::uint64_t h = seed_;
  for (double v : state) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h = Rng::mix(h, bits);
  }
  return Action::discrete(static_cast<int>(h % static_cast<std::uint64_t>(n_actions_)));
}

}  // namespace metiskit
