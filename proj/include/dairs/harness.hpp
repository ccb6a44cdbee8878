#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dairs/advisors.hpp"
#include "dairs/agent.hpp"
#include "dairs/core.hpp"
#include "dairs/dataset.hpp"
#include "dairs/environment.hpp"
#include "dairs/evaluator.hpp"

namespace dairs {

enum class Variant { FA, IA, IA_FA_CE, IA_FA };
enum class Trainers { none, rft, ift, rft_ift };

/// How an agent is told which element its current action writes.
enum class CursorEncoding { none, index };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::FA: return "FA";
    case Variant::IA: return "IA";
    case Variant::IA_FA_CE: return "IA+FA-CE";
    case Variant::IA_FA: return "IA+FA";
  }
  return "?";
}

inline std::string to_string(Trainers t) {
  switch (t) {
    case Trainers::none: return "none";
    case Trainers::rft: return "rft";
    case Trainers::ift: return "ift";
    case Trainers::rft_ift: return "rft+ift";
  }
  return "?";
}

namespace detail {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

inline Variant parse_variant(const std::string& s) {
  const auto v = detail::lower(s);
  if (v == "fa") return Variant::FA;
  if (v == "ia") return Variant::IA;
  if (v == "ia+fa-ce" || v == "ce") return Variant::IA_FA_CE;
  if (v == "ia+fa" || v == "dairs") return Variant::IA_FA;
  throw Error("unknown variant '" + s + "' (expected FA, IA, IA+FA-CE or IA+FA)");
}

inline Trainers parse_trainers(const std::string& s) {
  const auto v = detail::lower(s);
  if (v == "none" || v == "non-trainer") return Trainers::none;
  if (v == "rft") return Trainers::rft;
  if (v == "ift") return Trainers::ift;
  if (v == "rft+ift" || v == "ift+rft") return Trainers::rft_ift;
  throw Error("unknown trainers '" + s + "' (expected none, rft, ift or rft+ift)");
}

inline EnvMode env_mode(Variant v) {
  switch (v) {
    case Variant::FA: return EnvMode::feature_only;
    case Variant::IA: return EnvMode::instance_only;
    case Variant::IA_FA_CE: return EnvMode::joint_independent;
    case Variant::IA_FA: return EnvMode::joint_shared;
  }
  return EnvMode::joint_shared;
}

struct RunConfig {
  std::string data_path;
  std::string label_column = "label";
  CsvOptions csv;
  double split_ratio = 0.7;

  std::size_t steps = 3000;
  std::uint64_t seed = 0;
  Variant variant = Variant::IA_FA;
  Trainers trainers = Trainers::rft_ift;

  DqnConfig dqn;
  std::size_t grid = 32;
  MetricSet metrics;
  CursorEncoding cursor = CursorEncoding::index;
  /// Magnitude of the hot entry of the cursor encoding. Large enough that
  /// the per-position Q offsets outweigh drift from the pooled grid input.
  double cursor_scale = 10.0;

  double beta = 1.0;
  double anomaly_threshold = 0.6;
  /// Negative means the default: m for features, min(n_train, 1000) for instances.
  long advice_steps_features = -1;
  long advice_steps_instances = -1;
  ForestOptions forest;
  IsoForestOptions isolation;
  LogisticOptions logistic;

  std::size_t eval_stride = 1;
  /// Trailing window over which per-feature/instance selection frequency is kept.
  std::size_t frequency_window = 1000;
  /// Diagnostic: the instance agent rewrites the bit it scans unchanged.
  bool freeze_instance_actions = false;

  std::string out_dir;
};

inline bool has_feature_agent(Variant v) { return v != Variant::IA; }
inline bool has_instance_agent(Variant v) { return v != Variant::FA; }
inline bool uses_rft(Trainers t) { return t == Trainers::rft || t == Trainers::rft_ift; }
inline bool uses_ift(Trainers t) { return t == Trainers::ift || t == Trainers::rft_ift; }

inline void validate(const RunConfig& c) {
  if (uses_rft(c.trainers) && !has_feature_agent(c.variant)) {
    throw Error("trainer RFT needs the feature agent; variant " + to_string(c.variant) +
                " has none");
  }
  if (uses_ift(c.trainers) && !has_instance_agent(c.variant)) {
    throw Error("trainer IFT needs the instance agent; variant " + to_string(c.variant) +
                " has none");
  }
  if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0)) throw Error("split ratio must lie in (0, 1)");
  if (c.grid < 2) throw Error("state grid must be at least 2");
  if (c.eval_stride == 0) throw Error("eval stride must be positive");
  if (c.dqn.batch == 0 || c.dqn.capacity == 0 || c.dqn.target_sync_every == 0) {
    throw Error("batch, capacity and target sync interval must be positive");
  }
  if (c.metrics.size() == 0) throw Error("reward metric set is empty");
}

struct StepRecord {
  std::size_t step = 0;  // number of actions applied so far
  double accuracy = 0.0;
  double f1 = 0.0;
  double reward = 0.0;
  std::size_t n_features = 0;
  std::size_t n_instances = 0;
  int feature_action = -1;
  int instance_action = -1;
  double feature_reward = 0.0;
  double instance_reward = 0.0;

  bool operator==(const StepRecord&) const = default;
};

struct RunReport {
  MetricVector baseline;
  MetricVector best;
  SelectionMask best_mask;
  std::size_t best_step = 0;  // 0 is the initial full selection
  std::vector<StepRecord> trajectory;
  double feature_ratio = 1.0;
  double instance_ratio = 1.0;
  /// Fraction of the trailing `frequency_window` steps each element was selected.
  std::vector<double> feature_frequency;
  std::vector<double> instance_frequency;
  /// Q(select) - Q(deselect) of the final online networks at every scan
  /// position, evaluated on the final state.
  std::vector<double> feature_q_gap;
  std::vector<double> instance_q_gap;
  AdvicePlan advice;
  double wall_seconds = 0.0;
};

/// First step whose accuracy beats the baseline.
inline std::optional<std::size_t> steps_to_first_improvement(const RunReport& r) {
  for (const auto& s : r.trajectory) {
    if (s.accuracy > r.baseline.accuracy) return s.step;
  }
  return std::nullopt;
}

inline std::vector<double> one_hot(std::size_t index, std::size_t len, double value = 1.0) {
  std::vector<double> v(len, 0.0);
  if (len) v[index % len] = value;
  return v;
}

/// The selection loop. `data` must already be split and scaled.
inline RunReport run(const RunConfig& config, const SplitDataset& data) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t m = data.train.num_features();
  const std::size_t n = data.train.num_instances();
  if (m == 0 || n == 0) throw Error("training partition is empty");
  const EnvMode mode = env_mode(config.variant);
  const bool fa = has_feature_agent(config.variant);
  const bool ia = has_instance_agent(config.variant);
  const bool independent = mode == EnvMode::joint_independent;

  auto seeded = [&](std::string_view label) {
    return std::mt19937_64(derive_seed(config.seed, label));
  };

  RunReport report;
  AdvicePlan& plan = report.advice;
  plan.advice_steps_features =
      config.advice_steps_features < 0 ? m : static_cast<std::size_t>(config.advice_steps_features);
  plan.advice_steps_instances = config.advice_steps_instances < 0
                                    ? std::min<std::size_t>(n, 1000)
                                    : static_cast<std::size_t>(config.advice_steps_instances);
  const bool rft = uses_rft(config.trainers);
  const bool ift = uses_ift(config.trainers);
  if (!rft) plan.advice_steps_features = 0;
  if (!ift) plan.advice_steps_instances = 0;
  if (rft) {
    auto rng = seeded("random-forest");
    const auto forest = fit_random_forest(data.train, config.forest, rng);
    plan.feature_probs = advice_probabilities(forest.importances, config.beta);
  }
  if (ift) {
    auto advice = instance_advice(data.train, config.anomaly_threshold, config.isolation,
                                  derive_seed(config.seed, "isolation-forest"));
    plan.instance_actions = std::move(advice.actions);
    plan.instance_scores = std::move(advice.scores);
  }

  const bool cursor = config.cursor == CursorEncoding::index;
  auto make_agent = [&](std::string_view label, std::size_t cursor_dim) {
    DqnConfig dc = config.dqn;
    dc.network.cursor_dim = cursor ? cursor_dim : 0;
    auto rng = seeded(std::string(label) + "/init");
    return DqnAgent(dc, rng);
  };
  std::optional<DqnAgent> feature_agent, instance_agent;
  if (fa) feature_agent.emplace(make_agent("feature-agent", m));
  if (ia) instance_agent.emplace(make_agent("instance-agent", n));
  auto explore_f = seeded("feature-agent/explore");
  auto replay_f = seeded("feature-agent/replay");
  auto explore_i = seeded("instance-agent/explore");
  auto replay_i = seeded("instance-agent/replay");
  auto advice_rng = seeded("feature-advice");

  SelectionMask mask = SelectionMask::full(m, n);
  const std::vector<std::uint8_t> all_features(m, 1), all_instances(n, 1);
  MeasureOptions mopt{config.logistic};
  auto measure_mask = [&](std::span<const std::uint8_t> f, std::span<const std::uint8_t> i) {
    auto mv = measure(data, f, i, mopt);
    if (!std::isfinite(mv.accuracy) || !std::isfinite(mv.relevance) ||
        !std::isfinite(mv.non_redundancy)) {
      throw Error("non-finite metrics at step " + std::to_string(mask.step));
    }
    return mv;
  };

  report.baseline = measure_mask(mask.features, mask.instances);
  report.best = report.baseline;
  report.best_mask = mask;

  // Observations for the mask state at `mask.step`.
  auto observe_features = [&]() {
    const auto& rows = independent ? all_instances : mask.instances;
    return Observation{masked_state_grid(data.train.x, mask.features, rows, config.grid),
                       cursor ? one_hot(mask.step, m, config.cursor_scale) : std::vector<double>{}};
  };
  auto observe_instances = [&]() {
    const auto& cols = independent ? all_features : mask.features;
    return Observation{masked_state_grid(data.train.x, cols, mask.instances, config.grid),
                       cursor ? one_hot(mask.step, n, config.cursor_scale) : std::vector<double>{}};
  };

  std::optional<Observation> obs_f, obs_i;
  if (fa) obs_f = observe_features();
  if (ia) obs_i = observe_instances();

  MetricVector prev_joint = report.baseline;
  MetricVector prev_f = report.baseline;
  MetricVector prev_i = report.baseline;
  const std::size_t window_start =
      config.steps > config.frequency_window ? config.steps - config.frequency_window : 0;
  std::vector<double> f_count(m, 0.0), i_count(n, 0.0);
  std::vector<double> p_round;

  for (std::size_t t = 0; t < config.steps; ++t) {
    StepRecord rec;
    int f_act = 1, i_act = 1;
    if (fa) {
      std::optional<int> advised;
      if (rft && t < plan.advice_steps_features) {
        const auto list = sample_feature_advice(plan.feature_probs, advice_rng);
        advised = list[scan_index(t, m)];
      }
      f_act = feature_agent->select_action(*obs_f, explore_f, advised);
      rec.feature_action = f_act;
    }
    if (ia) {
      std::optional<int> advised;
      if (ift && t < plan.advice_steps_instances) advised = plan.instance_actions[scan_index(t, n)];
      i_act = instance_agent->select_action(*obs_i, explore_i, advised);
      if (config.freeze_instance_actions) i_act = mask.instances[scan_index(t, n)];
      rec.instance_action = i_act;
    }
    apply_actions(mask, f_act, i_act, mode);

    MetricVector joint = prev_joint, env_f = prev_f, env_i = prev_i;
    if (mask.step % config.eval_stride == 0) {
      joint = measure_mask(mask.features, mask.instances);
      if (independent) {
        env_f = measure_mask(mask.features, all_instances);
        env_i = measure_mask(all_features, mask.instances);
      } else {
        env_f = env_i = joint;
      }
    }
    rec.reward = compute_reward(prev_joint, joint, config.metrics);
    rec.feature_reward = compute_reward(prev_f, env_f, config.metrics);
    rec.instance_reward = compute_reward(prev_i, env_i, config.metrics);

    if (fa) {
      auto next = observe_features();
      feature_agent->remember({std::move(*obs_f), f_act, rec.feature_reward, next});
      obs_f = std::move(next);
      feature_agent->train_step(replay_f);
    }
    if (ia) {
      auto next = observe_instances();
      instance_agent->remember({std::move(*obs_i), i_act, rec.instance_reward, next});
      obs_i = std::move(next);
      instance_agent->train_step(replay_i);
    }

    rec.step = mask.step;
    rec.accuracy = joint.accuracy;
    rec.f1 = joint.f1;
    for (auto b : mask.features) rec.n_features += b;
    for (auto b : mask.instances) rec.n_instances += b;
    report.trajectory.push_back(rec);
    if (joint.accuracy > report.best.accuracy) {
      report.best = joint;
      report.best_mask = mask;
      report.best_step = mask.step;
    }
    if (t >= window_start) {
      for (std::size_t j = 0; j < m; ++j) f_count[j] += mask.features[j];
      for (std::size_t i = 0; i < n; ++i) i_count[i] += mask.instances[i];
    }
    prev_joint = joint;
    prev_f = env_f;
    prev_i = env_i;
  }

  auto q_gaps = [&](const DqnAgent& agent, Observation obs, std::size_t len) {
    std::vector<double> gaps(len);
    for (std::size_t j = 0; j < len; ++j) {
      if (cursor) obs.cursor = one_hot(j, len, config.cursor_scale);
      const auto q = agent.q_values(obs);
      gaps[j] = q[1] - q[0];
    }
    return gaps;
  };
  if (fa) report.feature_q_gap = q_gaps(*feature_agent, *obs_f, m);
  if (ia) report.instance_q_gap = q_gaps(*instance_agent, *obs_i, n);

  const double window = static_cast<double>(config.steps - window_start);
  report.feature_frequency.assign(m, 1.0);
  report.instance_frequency.assign(n, 1.0);
  if (window > 0) {
    for (std::size_t j = 0; j < m; ++j) report.feature_frequency[j] = f_count[j] / window;
    for (std::size_t i = 0; i < n; ++i) report.instance_frequency[i] = i_count[i] / window;
  }
  std::tie(report.feature_ratio, report.instance_ratio) = selection_ratio(report.best_mask);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// Loads, encodes, splits (seed derived from the master seed) and scales.
inline SplitDataset prepare_data(const RunConfig& config) {
  if (config.data_path.empty()) throw Error("no data file given");
  CsvOptions csv = config.csv;
  const auto table = load_csv(config.data_path, config.label_column, csv);
  auto data = split(encode(table), config.split_ratio, derive_seed(config.seed, "split"));
  scale_to_unit(data);
  return data;
}

inline RunReport run(const RunConfig& config) {
  validate(config);
  return run(config, prepare_data(config));
}

// ---------------------------------------------------------------------------
// Output files.

inline void write_trajectory(std::ostream& os, const RunReport& r) {
  os << "step,accuracy,f1,reward,n_features,n_instances\n";
  for (const auto& s : r.trajectory) {
    os << s.step << ',' << format_number(s.accuracy) << ',' << format_number(s.f1) << ','
       << format_number(s.reward) << ',' << s.n_features << ',' << s.n_instances << '\n';
  }
  os << "# summary\n";
  os << "baseline_accuracy," << format_number(r.baseline.accuracy) << '\n';
  os << "baseline_f1," << format_number(r.baseline.f1) << '\n';
  os << "best_step," << r.best_step << '\n';
  os << "best_accuracy," << format_number(r.best.accuracy) << '\n';
  os << "best_f1," << format_number(r.best.f1) << '\n';
  os << "feature_ratio," << format_number(r.feature_ratio) << '\n';
  os << "instance_ratio," << format_number(r.instance_ratio) << '\n';
}

inline void export_trajectory(const RunReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trajectory file: " + path);
  write_trajectory(out, r);
  if (!out) throw Error("failed while writing trajectory file: " + path);
}

inline void write_summary(std::ostream& os, const RunConfig& c, const RunReport& r) {
  const auto first = steps_to_first_improvement(r);
  os << "variant=" << to_string(c.variant) << '\n'
     << "trainers=" << to_string(c.trainers) << '\n'
     << "seed=" << c.seed << '\n'
     << "steps=" << c.steps << '\n'
     << "baseline_accuracy=" << format_number(r.baseline.accuracy) << '\n'
     << "baseline_f1=" << format_number(r.baseline.f1) << '\n'
     << "baseline_relevance=" << format_number(r.baseline.relevance) << '\n'
     << "baseline_non_redundancy=" << format_number(r.baseline.non_redundancy) << '\n'
     << "best_step=" << r.best_step << '\n'
     << "best_accuracy=" << format_number(r.best.accuracy) << '\n'
     << "best_f1=" << format_number(r.best.f1) << '\n'
     << "best_relevance=" << format_number(r.best.relevance) << '\n'
     << "best_non_redundancy=" << format_number(r.best.non_redundancy) << '\n'
     << "feature_ratio=" << format_number(r.feature_ratio) << '\n'
     << "instance_ratio=" << format_number(r.instance_ratio) << '\n'
     << "steps_to_first_improvement=" << (first ? std::to_string(*first) : "none") << '\n'
     << "wall_seconds=" << format_number(r.wall_seconds) << '\n';
}

inline void write_mask(std::ostream& os, const SelectionMask& mask) {
  os << "kind,index,selected\n";
  for (std::size_t j = 0; j < mask.features.size(); ++j) {
    os << "feature," << j << ',' << static_cast<int>(mask.features[j]) << '\n';
  }
  for (std::size_t i = 0; i < mask.instances.size(); ++i) {
    os << "instance," << i << ',' << static_cast<int>(mask.instances[i]) << '\n';
  }
}

/// trajectory.csv, summary.txt, best_mask.csv and advice.txt under `dir`.
inline void write_outputs(const std::string& dir, const RunConfig& c, const RunReport& r) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  export_trajectory(r, (base / "trajectory.csv").string());
  auto open = [&](const char* name) {
    std::ofstream out(base / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (base / name).string());
    return out;
  };
  {
    auto out = open("summary.txt");
    write_summary(out, c, r);
  }
  {
    auto out = open("best_mask.csv");
    write_mask(out, r.best_mask);
  }
  {
    auto out = open("advice.txt");
    write_advice_plan(out, r.advice);
  }
}

// ---------------------------------------------------------------------------
// Variant comparison.

struct VariantSpec {
  Variant variant = Variant::IA_FA;
  Trainers trainers = Trainers::rft_ift;

  std::string name() const { return to_string(variant) + ":" + to_string(trainers); }
};

/// "VARIANT" or "VARIANT:TRAINERS"; a missing trainer part takes `fallback`.
inline VariantSpec parse_variant_spec(const std::string& text, Trainers fallback) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) return {parse_variant(text), fallback};
  return {parse_variant(text.substr(0, colon)), parse_trainers(text.substr(colon + 1))};
}

struct VariantResult {
  VariantSpec spec;
  std::uint64_t seed = 0;
  double baseline_accuracy = 0.0;
  double best_accuracy = 0.0;
  double best_f1 = 0.0;
  std::optional<std::size_t> first_improvement;
  double feature_ratio = 1.0;
  double instance_ratio = 1.0;
  RunReport report;
};

/// Runs every spec under every seed on the same data. Jobs are independent;
/// up to `threads` run concurrently. Results are ordered spec-major.
inline std::vector<VariantResult> compare_variants(const RunConfig& base,
                                                   const std::vector<VariantSpec>& specs,
                                                   const std::vector<std::uint64_t>& seeds,
                                                   const SplitDataset& data,
                                                   std::size_t threads = 1) {
  for (const auto& s : specs) {
    RunConfig c = base;
    c.variant = s.variant;
    c.trainers = s.trainers;
    validate(c);
  }
  std::vector<VariantResult> results(specs.size() * seeds.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(results.size());
  auto worker = [&]() {
    for (std::size_t job = next++; job < results.size(); job = next++) {
      const auto& spec = specs[job / seeds.size()];
      RunConfig c = base;
      c.variant = spec.variant;
      c.trainers = spec.trainers;
      c.seed = seeds[job % seeds.size()];
      try {
        auto rep = run(c, data);
        auto& out = results[job];
        out.spec = spec;
        out.seed = c.seed;
        out.baseline_accuracy = rep.baseline.accuracy;
        out.best_accuracy = rep.best.accuracy;
        out.best_f1 = rep.best.f1;
        out.first_improvement = steps_to_first_improvement(rep);
        out.feature_ratio = rep.feature_ratio;
        out.instance_ratio = rep.instance_ratio;
        out.report = std::move(rep);
      } catch (const std::exception& e) {
        errors[job] = spec.name() + " seed " + std::to_string(c.seed) + ": " + e.what();
      }
    }
  };
  const std::size_t pool = std::max<std::size_t>(1, std::min(threads, results.size()));
  std::vector<std::thread> workers;
  for (std::size_t k = 1; k < pool; ++k) workers.emplace_back(worker);
  worker();
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
  return results;
}

inline void write_comparison(std::ostream& os, const std::vector<VariantResult>& results) {
  os << "variant,trainers,seed,baseline_accuracy,best_accuracy,best_f1,"
        "steps_to_first_improvement,feature_ratio,instance_ratio\n";
  for (const auto& r : results) {
    os << to_string(r.spec.variant) << ',' << to_string(r.spec.trainers) << ',' << r.seed << ','
       << format_number(r.baseline_accuracy) << ',' << format_number(r.best_accuracy) << ','
       << format_number(r.best_f1) << ','
       << (r.first_improvement ? std::to_string(*r.first_improvement) : "none") << ','
       << format_number(r.feature_ratio) << ',' << format_number(r.instance_ratio) << '\n';
  }
}

/// Median steps-to-first-improvement; runs that never improve count as
/// steps + 1.
inline double median_first_improvement(const std::vector<VariantResult>& results,
                                       std::size_t steps) {
  std::vector<double> v;
  for (const auto& r : results) {
    v.push_back(static_cast<double>(r.first_improvement.value_or(steps + 1)));
  }
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

// ---------------------------------------------------------------------------
// Flat key=value configuration. Every key is also a command-line flag.

struct ConfigKey {
  const char* name;
  const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"data", "input data file"},
      {"label", "label column name or zero-based index"},
      {"header", "first line holds column names (true/false)"},
      {"delimiter", "cell separator: a single character, or 'whitespace'"},
      {"split-ratio", "fraction of rows used for training"},
      {"variant", "FA, IA, IA+FA-CE or IA+FA"},
      {"trainers", "none, rft, ift or rft+ift"},
      {"steps", "exploration steps T"},
      {"seed", "master seed"},
      {"gamma", "discount factor"},
      {"epsilon", "probability of the greedy action"},
      {"alpha", "Q-network learning rate"},
      {"batch", "replay mini-batch size"},
      {"capacity", "replay memory capacity"},
      {"target-sync", "train steps between target-network syncs"},
      {"grid", "pooled state grid size"},
      {"conv-channels", "state encoder output channels"},
      {"conv-kernel", "state encoder kernel size (odd)"},
      {"conv-pool", "state encoder pooled size"},
      {"hidden", "hidden units of the Q head"},
      {"cursor", "scan-cursor input to the Q head: index or none"},
      {"cursor-scale", "value of the hot entry of the cursor encoding"},
      {"metrics", "reward metrics, comma separated: accuracy,relevance,non_redundancy"},
      {"beta", "random-forest advice threshold factor"},
      {"anomaly-threshold", "isolation-forest score above which a row is advised out"},
      {"advice-steps-features", "steps the feature agent follows advice (-1: m)"},
      {"advice-steps-instances", "steps the instance agent follows advice (-1: min(n,1000))"},
      {"rf-trees", "random-forest trees"},
      {"rf-depth", "random-forest maximum depth"},
      {"if-trees", "isolation-forest trees"},
      {"if-subsample", "isolation-forest subsample size"},
      {"lr-epochs", "logistic-regression epoch budget"},
      {"lr-rate", "logistic-regression step size"},
      {"lr-tolerance", "logistic-regression early-stop loss improvement"},
      {"eval-stride", "steps between metric remeasurements"},
      {"frequency-window", "trailing steps for selection-frequency statistics"},
      {"out", "output directory"},
  };
  return keys;
}

namespace detail {

template <class T>
T parse_unsigned(const std::string& key, const std::string& value) {
  const auto v = parse_number(value);
  if (!v || *v < 0 || std::floor(*v) != *v) {
    throw Error("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return static_cast<T>(*v);
}

inline double parse_real(const std::string& key, const std::string& value) {
  const auto v = parse_number(value);
  if (!v) throw Error("config key '" + key + "' expects a number, got '" + value + "'");
  return *v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  const auto v = lower(value);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error("config key '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace detail

inline void set_config_value(RunConfig& c, const std::string& raw_key, const std::string& value) {
  std::string key = raw_key;
  std::replace(key.begin(), key.end(), '_', '-');
  using detail::parse_bool;
  using detail::parse_real;
  using detail::parse_unsigned;
  if (key == "data") c.data_path = value;
  else if (key == "label") c.label_column = value;
  else if (key == "header") c.csv.header = parse_bool(key, value);
  else if (key == "delimiter") {
    if (detail::lower(value) == "whitespace") {
      c.csv.whitespace = true;
    } else if (value == "\\t" || value == "tab") {
      c.csv.whitespace = false;
      c.csv.delimiter = '\t';
    } else if (value.size() == 1) {
      c.csv.whitespace = false;
      c.csv.delimiter = value[0];
    } else {
      throw Error("delimiter must be one character or 'whitespace'");
    }
  }
  else if (key == "split-ratio") c.split_ratio = parse_real(key, value);
  else if (key == "variant") c.variant = parse_variant(value);
  else if (key == "trainers") c.trainers = parse_trainers(value);
  else if (key == "steps") c.steps = parse_unsigned<std::size_t>(key, value);
  else if (key == "seed") c.seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "gamma") c.dqn.gamma = parse_real(key, value);
  else if (key == "epsilon") c.dqn.epsilon = parse_real(key, value);
  else if (key == "alpha") c.dqn.learning_rate = parse_real(key, value);
  else if (key == "batch") c.dqn.batch = parse_unsigned<std::size_t>(key, value);
  else if (key == "capacity") c.dqn.capacity = parse_unsigned<std::size_t>(key, value);
  else if (key == "target-sync") c.dqn.target_sync_every = parse_unsigned<std::size_t>(key, value);
  else if (key == "grid") c.grid = parse_unsigned<std::size_t>(key, value);
  else if (key == "conv-channels") c.dqn.network.channels = parse_unsigned<std::size_t>(key, value);
  else if (key == "conv-kernel") c.dqn.network.kernel = parse_unsigned<std::size_t>(key, value);
  else if (key == "conv-pool") c.dqn.network.pool = parse_unsigned<std::size_t>(key, value);
  else if (key == "hidden") c.dqn.network.hidden = parse_unsigned<std::size_t>(key, value);
  else if (key == "cursor") {
    const auto v = detail::lower(value);
    if (v == "index") c.cursor = CursorEncoding::index;
    else if (v == "none") c.cursor = CursorEncoding::none;
    else throw Error("cursor must be 'index' or 'none'");
  }
  else if (key == "cursor-scale") c.cursor_scale = parse_real(key, value);
  else if (key == "metrics") {
    MetricSet set{false, false, false};
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::lower(detail::trim(item));
      if (item == "accuracy") set.accuracy = true;
      else if (item == "relevance") set.relevance = true;
      else if (item == "non_redundancy" || item == "non-redundancy" || item == "redundancy")
        set.non_redundancy = true;
      else throw Error("unknown reward metric '" + item + "'");
    }
    c.metrics = set;
  }
  else if (key == "beta") c.beta = parse_real(key, value);
  else if (key == "anomaly-threshold") c.anomaly_threshold = parse_real(key, value);
  else if (key == "advice-steps-features") c.advice_steps_features = static_cast<long>(parse_real(key, value));
  else if (key == "advice-steps-instances") c.advice_steps_instances = static_cast<long>(parse_real(key, value));
  else if (key == "rf-trees") c.forest.n_trees = parse_unsigned<std::size_t>(key, value);
  else if (key == "rf-depth") c.forest.max_depth = parse_unsigned<std::size_t>(key, value);
  else if (key == "if-trees") c.isolation.n_trees = parse_unsigned<std::size_t>(key, value);
  else if (key == "if-subsample") c.isolation.subsample = parse_unsigned<std::size_t>(key, value);
  else if (key == "lr-epochs") c.logistic.epochs = parse_unsigned<std::size_t>(key, value);
  else if (key == "lr-rate") c.logistic.learning_rate = parse_real(key, value);
  else if (key == "lr-tolerance") c.logistic.tolerance = parse_real(key, value);
  else if (key == "eval-stride") c.eval_stride = parse_unsigned<std::size_t>(key, value);
  else if (key == "frequency-window") c.frequency_window = parse_unsigned<std::size_t>(key, value);
  else if (key == "out") c.out_dir = value;
  else throw Error("unknown config key '" + raw_key + "'");
}

/// Lines of `key=value`; blank lines and lines starting with '#' are ignored.
inline std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(lineno) + " lacks '='");
    }
    entries.emplace_back(detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)));
  }
  return entries;
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  for (const auto& [k, v] : parse_config(in)) set_config_value(c, k, v);
}

}  // namespace dairs
