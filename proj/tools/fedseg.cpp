// fedseg: synthetic federated lesion-segmentation experiments.
//
// Subcommands: generate, run, run-suite, evaluate, rank, report.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedseg/orchestrator.hpp"
#include "fedseg/raster.hpp"

namespace fs = std::filesystem;
using namespace fedseg;

namespace {

FederationConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return json::parse(in).get<FederationConfig>();
}

struct RunFlags {
  std::string config_path;
  std::string rule = "fedavg";
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  std::optional<int> threads;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<double> beta;
  std::optional<double> mu;
  std::optional<int> eval_every;
};

FederationConfig resolve_config(const RunFlags& f) {
  FederationConfig cfg;
  if (!f.config_path.empty()) cfg = load_config_file(f.config_path);
  if (f.rule != "centralized") cfg.rule = AggregationRule::parse(f.rule);
  if (f.seed) cfg.master_seed = *f.seed;
  if (f.rounds) cfg.rounds = *f.rounds;
  if (f.threads) cfg.threads = *f.threads;
  if (f.epochs) cfg.train.epochs_per_round = *f.epochs;
  if (f.lr) cfg.train.learning_rate = *f.lr;
  if (f.beta) cfg.rule.beta = *f.beta;
  if (f.mu) cfg.rule.mu = *f.mu;
  if (f.eval_every) cfg.eval_every = *f.eval_every;
  cfg.validate();
  return cfg;
}

void print_pool_line(const char* label, const PoolStats& s) {
  if (s.n == 0) return;
  std::printf("  %-8s n=%-4d pre=%.4f dsc=%.4f avd=%.4f ald=%.3f lf1=%.4f\n",
              label, s.n, s.pre, s.dsc, s.avd_ml, s.ald, s.lf1);
}

int cmd_generate(const std::string& out_dir, const RunFlags& flags) {
  const auto cfg = resolve_config(flags);
  const auto datasets = build_federation(cfg);
  write_dataset(out_dir, datasets, cfg.master_seed);
  std::size_t n = 0;
  for (const auto& ds : datasets) n += ds.train.size() + ds.test.size();
  std::printf("wrote %zu studies from %zu centers to %s\n", n, datasets.size(),
              out_dir.c_str());
  std::printf("dataset digest: %016llx\n",
              static_cast<unsigned long long>(federation_digest(datasets)));
  return 0;
}

int cmd_run(const std::string& out_dir, const RunFlags& flags) {
  const auto cfg = resolve_config(flags);
  const auto datasets = build_federation(cfg);
  const ExperimentReport report =
      flags.rule == "centralized" ? run_centralized(cfg, datasets, out_dir)
                                  : run_federated(cfg, datasets, out_dir);
  std::printf("%s finished: %d rounds in %.1f s\n", report.rule_name.c_str(),
              cfg.rounds, report.duration_sec);
  const auto& last = report.rounds.back();
  print_pool_line("large", last.large);
  print_pool_line("limited", last.limited);
  std::printf("outputs in %s\n", out_dir.c_str());
  return 0;
}

int cmd_run_suite(const std::string& out_dir, const RunFlags& flags) {
  RunFlags f = flags;
  f.rule = "fedavg";  // per-model rules are fixed by the suite
  const auto cfg = resolve_config(f);
  const auto suite = run_suite(cfg, out_dir);
  std::printf("suite finished; ranking by large-pool PRE:\n");
  for (std::size_t i = 0; i < suite.ranking_large.entries.size(); ++i)
    std::printf("  %zu. %-12s pre=%.4f\n", i + 1,
                suite.ranking_large.entries[i].model.c_str(),
                suite.ranking_large.entries[i].pre);
  std::printf("outputs in %s\n", out_dir.c_str());
  return 0;
}

Mask mask_from_raster_file(const fs::path& path) {
  const auto data = read_raster(path);
  // studies carry (dwi, adc, mask); standalone predictions carry one channel
  return mask_from_channel(data.channels.back());
}

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir,
                 const std::string& out_csv, int connectivity) {
  std::map<std::string, int> center_ids;
  const fs::path manifest_path = fs::path(gt_dir) / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    const json manifest = json::parse(in);
    for (const auto& e : manifest.at("studies"))
      center_ids[e.at("patient_id").get<std::string>()] = e.at("center_id").get<int>();
  }

  std::vector<fs::path> gt_files;
  for (const auto& entry : fs::directory_iterator(gt_dir))
    if (entry.path().extension() == ".rst") gt_files.push_back(entry.path());
  std::sort(gt_files.begin(), gt_files.end());
  if (gt_files.empty()) throw std::runtime_error("no .rst rasters in " + gt_dir);

  std::string csv =
      "patient_id,center_id,category,dsc,avd_ml,ald,lf1,gt_volume_ml,gt_lesion_count\n";
  int evaluated = 0;
  for (const auto& gt_path : gt_files) {
    const fs::path pred_path = fs::path(pred_dir) / gt_path.filename();
    if (!fs::exists(pred_path)) {
      std::fprintf(stderr, "warning: no prediction for %s, skipping\n",
                   gt_path.filename().c_str());
      continue;
    }
    const auto gt_data = read_raster(gt_path);
    const Mask gt = mask_from_channel(gt_data.channels.back());
    const Mask pred = mask_from_raster_file(pred_path);
    const auto m = evaluate_patient(pred, gt, gt_data.spacing, connectivity);

    const std::string stem = gt_path.stem().string();
    const auto it = center_ids.find(stem);
    char buf[220];
    std::snprintf(buf, sizeof(buf), "%s,%d,%c,%.9g,%.9g,%d,%.9g,%.9g,%d\n",
                  stem.c_str(), it != center_ids.end() ? it->second : 0,
                  category_char(m.category), m.dsc, m.avd_ml, m.ald, m.lf1,
                  m.gt_volume_ml, m.gt_lesion_count);
    csv += buf;
    ++evaluated;
  }
  std::ofstream out(out_csv, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + out_csv);
  out << csv;
  std::printf("evaluated %d patients -> %s\n", evaluated, out_csv.c_str());
  return 0;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv: " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

// PRE of one per-patient CSV (an `evaluate` output or a run's
// per_patient.csv), optionally restricted to one pool.
double pre_from_csv(const CsvTable& t, const std::string& pool) {
  const int c_dsc = t.column("dsc"), c_avd = t.column("avd_ml");
  const int c_ald = t.column("ald"), c_lf1 = t.column("lf1");
  const int c_vol = t.column("gt_volume_ml"), c_cnt = t.column("gt_lesion_count");
  const int c_pool = t.column("pool");
  if (c_dsc < 0 || c_avd < 0 || c_ald < 0 || c_lf1 < 0 || c_vol < 0 || c_cnt < 0)
    throw std::runtime_error("csv lacks the per-patient metric columns");
  std::vector<RelativeErrors> errs;
  for (const auto& row : t.rows) {
    if (pool != "all") {
      if (c_pool < 0) throw std::runtime_error("csv has no pool column");
      if (row[c_pool] != pool) continue;
    }
    SegmentationMetrics m;
    m.dsc = std::stod(row[c_dsc]);
    m.avd_ml = std::stod(row[c_avd]);
    m.ald = std::stoi(row[c_ald]);
    m.lf1 = std::stod(row[c_lf1]);
    m.gt_volume_ml = std::stod(row[c_vol]);
    m.gt_lesion_count = std::stoi(row[c_cnt]);
    errs.push_back(relative_errors(m));
  }
  return pre(errs);
}

int cmd_rank(const std::vector<std::string>& inputs, const std::string& out_prefix,
             const std::string& pool) {
  std::map<std::string, double> scores;
  for (const auto& spec : inputs) {
    std::string name, path;
    const auto eq = spec.find('=');
    if (eq != std::string::npos) {
      name = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      path = spec;
      name = fs::path(spec).stem().string();
    }
    scores[name] = pre_from_csv(read_csv(path), pool);
  }
  const auto ranking = rank_models(scores);

  std::string txt = "model ranking by PRE (pool: " + pool + ")\n";
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %zu. %-16s pre=%.6f\n", i + 1,
                  ranking.entries[i].model.c_str(), ranking.entries[i].pre);
    txt += buf;
  }
  std::fputs(txt.c_str(), stdout);
  if (!out_prefix.empty()) {
    std::ofstream csv(out_prefix + ".csv", std::ios::trunc);
    csv << ranking_csv_string(ranking);
    std::ofstream t(out_prefix + ".txt", std::ios::trunc);
    t << txt;
    std::printf("wrote %s.csv and %s.txt\n", out_prefix.c_str(), out_prefix.c_str());
  }
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const fs::path report_path = fs::path(run_dir) / "report.json";
  if (fs::exists(report_path)) {
    std::ifstream in(report_path);
    const json r = json::parse(in);
    std::printf("rule: %s\n", r.at("rule").get<std::string>().c_str());
    std::printf("total epochs: %ld\n", r.at("total_epochs").get<long>());
    std::printf("duration: %.1f s\n", r.at("duration_sec").get<double>());
    std::printf("dataset digest: %s\n", r.at("dataset_digest").get<std::string>().c_str());
    if (r.contains("final")) {
      const auto read_pool = [&](const char* pool) {
        const auto& p = r.at("final").at(pool);
        PoolStats s;
        s.n = p.at("n").get<int>();
        s.pre = p.at("pre").get<double>();
        s.dsc = p.at("dsc").get<double>();
        s.avd_ml = p.at("avd_ml").get<double>();
        s.ald = p.at("ald").get<double>();
        s.lf1 = p.at("lf1").get<double>();
        return s;
      };
      std::printf("final round:\n");
      print_pool_line("large", read_pool("large"));
      print_pool_line("limited", read_pool("limited"));
    }
  }
  const fs::path ranking_path = fs::path(run_dir) / "ranking.txt";
  if (fs::exists(ranking_path)) {
    std::ifstream in(ranking_path);
    std::cout << in.rdbuf();
  }
  if (!fs::exists(report_path) && !fs::exists(ranking_path))
    throw std::runtime_error("no report.json or ranking.txt under " + run_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic federated lesion-segmentation experiments"};
  app.require_subcommand(1);

  RunFlags flags;
  std::string out_dir, gt_dir, pred_dir, out_csv = "metrics.csv";
  std::string run_dir, out_prefix, pool = "all";
  int connectivity = 8;
  std::vector<std::string> rank_inputs;

  const auto add_common = [&flags](CLI::App* cmd, bool with_rule) {
    cmd->add_option("--config", flags.config_path, "experiment config JSON");
    cmd->add_option("--seed", flags.seed, "master seed");
    cmd->add_option("--rounds", flags.rounds, "federated rounds");
    cmd->add_option("--threads", flags.threads, "parallel center trainings");
    cmd->add_option("--epochs", flags.epochs, "epochs per round");
    cmd->add_option("--lr", flags.lr, "learning rate");
    cmd->add_option("--eval-every", flags.eval_every, "evaluation cadence");
    if (with_rule) {
      cmd->add_option("--rule", flags.rule,
                      "fedavg|vanillaavg|beta|softmax|fedprox|centralized");
      cmd->add_option("--beta", flags.beta, "beta-weighting discount");
      cmd->add_option("--mu", flags.mu, "fedprox proximal strength");
    }
  };

  auto* generate = app.add_subcommand("generate", "write the synthetic federation to disk");
  generate->add_option("--out", out_dir, "output directory")->required();
  add_common(generate, false);

  auto* run = app.add_subcommand("run", "run one federated (or centralized) experiment");
  run->add_option("--out", out_dir, "output directory")->required();
  add_common(run, true);

  auto* suite = app.add_subcommand("run-suite", "run all five rules plus the centralized baseline");
  suite->add_option("--out", out_dir, "output directory")->required();
  add_common(suite, false);

  auto* evaluate = app.add_subcommand("evaluate", "score prediction rasters against ground truth");
  evaluate->add_option("--pred", pred_dir, "directory of prediction rasters")->required();
  evaluate->add_option("--gt", gt_dir, "directory of ground-truth rasters")->required();
  evaluate->add_option("--out", out_csv, "output metrics csv");
  evaluate->add_option("--connectivity", connectivity, "4 or 8")
      ->check(CLI::IsMember({4, 8}));

  auto* rank = app.add_subcommand("rank", "rank models from per-patient metric CSVs");
  rank->add_option("inputs", rank_inputs, "metric CSVs, each as path or name=path")
      ->required()
      ->expected(-1);
  rank->add_option("--out-prefix", out_prefix, "write <prefix>.csv and <prefix>.txt");
  rank->add_option("--pool", pool, "large|limited|all")
      ->check(CLI::IsMember({"large", "limited", "all"}));

  auto* report = app.add_subcommand("report", "summarize a run or suite directory");
  report->add_option("--run", run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(out_dir, flags);
    if (run->parsed()) return cmd_run(out_dir, flags);
    if (suite->parsed()) return cmd_run_suite(out_dir, flags);
    if (evaluate->parsed()) return cmd_evaluate(pred_dir, gt_dir, out_csv, connectivity);
    if (rank->parsed()) return cmd_rank(rank_inputs, out_prefix, pool);
    if (report->parsed()) return cmd_report(run_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
