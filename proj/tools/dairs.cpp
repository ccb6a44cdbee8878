// Command-line front end: single runs, variant comparisons, planted data.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "dairs/harness.hpp"
#include "dairs/synthetic.hpp"

namespace {

struct Overrides {
  std::string config_file;
  std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_file, "key=value configuration file");
  for (const auto& key : dairs::config_keys()) {
    auto* opt = app.add_option_function<std::string>(
        std::string("--") + key.name,
        [&o, name = std::string(key.name)](const std::string& v) { o.values[name] = v; },
        key.help);
    opt->type_name("VALUE");
  }
}

dairs::RunConfig build_config(const Overrides& o) {
  dairs::RunConfig c;
  if (!o.config_file.empty()) dairs::apply_config_file(c, o.config_file);
  for (const auto& [k, v] : o.values) dairs::set_config_value(c, k, v);
  return c;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash != std::string::npos) {
      const auto lo = std::stoull(item.substr(0, dash));
      const auto hi = std::stoull(item.substr(dash + 1));
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else if (!item.empty()) {
      seeds.push_back(std::stoull(item));
    }
  }
  if (seeds.empty()) throw dairs::Error("no seeds given");
  return seeds;
}

dairs::SplitDataset load(const dairs::RunConfig& c, bool synthetic, std::uint64_t synth_seed) {
  if (!synthetic) return dairs::prepare_data(c);
  dairs::PlantedOptions po;
  po.seed = synth_seed;
  auto planted = dairs::make_planted(po);
  std::cerr << "planted data: informative columns";
  for (auto j : planted.informative) std::cerr << ' ' << j;
  std::cerr << ", " << planted.flipped.size() << " flipped training rows\n";
  return std::move(planted.data);
}

void print_summary(const dairs::RunConfig& c, const dairs::RunReport& r) {
  dairs::write_summary(std::cout, c, r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-agent reinforced joint feature and instance selection"};
  app.require_subcommand(1);

  Overrides run_o;
  bool run_synthetic = false;
  std::uint64_t run_synth_seed = 7;
  auto* run = app.add_subcommand("run", "one selection run");
  add_config_flags(*run, run_o);
  run->add_flag("--synthetic", run_synthetic, "use the planted synthetic problem instead of --data");
  run->add_option("--synthetic-seed", run_synth_seed, "seed of the planted problem");

  Overrides cmp_o;
  std::string variants = "FA:none,IA:none,IA+FA-CE:none,IA+FA:none,IA+FA:rft,IA+FA:ift,IA+FA:rft+ift";
  std::string seeds = "0-4";
  std::size_t threads = 1;
  bool cmp_synthetic = false;
  std::uint64_t cmp_synth_seed = 7;
  auto* cmp = app.add_subcommand("compare", "several variants over several seeds");
  add_config_flags(*cmp, cmp_o);
  cmp->add_option("--variants", variants, "comma-separated VARIANT[:TRAINERS] list");
  cmp->add_option("--seeds", seeds, "comma-separated seeds or ranges, e.g. 0-4");
  cmp->add_option("--threads", threads, "concurrent runs");
  cmp->add_flag("--synthetic", cmp_synthetic, "use the planted synthetic problem");
  cmp->add_option("--synthetic-seed", cmp_synth_seed, "seed of the planted problem");

  std::string synth_out;
  std::uint64_t synth_seed = 7;
  auto* synth = app.add_subcommand("synth", "write the planted problem as two CSV files");
  synth->add_option("--out", synth_out, "output prefix; writes PREFIX.train.csv and PREFIX.test.csv")
      ->required();
  synth->add_option("--seed", synth_seed, "seed of the planted problem");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = build_config(run_o);
      const auto data = load(cfg, run_synthetic, run_synth_seed);
      const auto report = dairs::run(cfg, data);
      print_summary(cfg, report);
      if (!cfg.out_dir.empty()) dairs::write_outputs(cfg.out_dir, cfg, report);
    } else if (cmp->parsed()) {
      const auto cfg = build_config(cmp_o);
      const auto data = load(cfg, cmp_synthetic, cmp_synth_seed);
      std::vector<dairs::VariantSpec> specs;
      std::stringstream ss(variants);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) specs.push_back(dairs::parse_variant_spec(item, cfg.trainers));
      }
      const auto results = dairs::compare_variants(cfg, specs, parse_seeds(seeds), data, threads);
      dairs::write_comparison(std::cout, results);
      for (const auto& s : specs) {
        std::vector<dairs::VariantResult> group;
        for (const auto& r : results) {
          if (r.spec.name() == s.name()) group.push_back(r);
        }
        std::cerr << s.name() << " median steps to first improvement: "
                  << dairs::median_first_improvement(group, cfg.steps) << '\n';
      }
      if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream out(std::filesystem::path(cfg.out_dir) / "comparison.csv");
        dairs::write_comparison(out, results);
      }
    } else if (synth->parsed()) {
      dairs::PlantedOptions po;
      po.seed = synth_seed;
      const auto planted = dairs::make_planted(po);
      auto dump = [](const dairs::Dataset& d, const std::string& path) {
        std::ofstream out(path);
        if (!out) throw dairs::Error("cannot write " + path);
        for (const auto& name : d.feature_names) out << name << ',';
        out << "label\n";
        for (std::size_t i = 0; i < d.num_instances(); ++i) {
          for (auto v : d.x.row(i)) out << dairs::format_number(v) << ',';
          out << d.class_labels[d.y[i]] << '\n';
        }
      };
      dump(planted.data.train, synth_out + ".train.csv");
      dump(planted.data.test, synth_out + ".test.csv");
      std::cout << "informative";
      for (auto j : planted.informative) std::cout << ' ' << j;
      std::cout << "\nflipped";
      for (auto i : planted.flipped) std::cout << ' ' << i;
      std::cout << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
