#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedseg/aggregation.hpp"
#include "fedseg/checkpoint.hpp"
#include "fedseg/hash.hpp"
#include "fedseg/json_io.hpp"
#include "fedseg/ranking.hpp"
#include "fedseg/trainer.hpp"

namespace fedseg {

enum class InitMode { kCommon, kPerCenter };

// Everything one experiment needs. An empty `centers` list resolves to the
// default 14-center federation derived from master_seed.
struct FederationConfig {
  int rounds = 30;
  AggregationRule rule = AggregationRule::fedavg();
  TrainConfig train;
  ModelConfig model;
  std::vector<CenterProfile> centers;
  std::uint64_t master_seed = 42;
  int eval_every = 1;
  int threads = 1;
  InitMode init_mode = InitMode::kCommon;

  std::vector<CenterProfile> resolved_centers() const {
    return centers.empty() ? default_federation(master_seed) : centers;
  }

  void validate() const {
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    rule.validate();
    train.validate();
    model.validate();
    bool any_large = false;
    for (const auto& c : resolved_centers()) {
      c.validate();
      any_large = any_large || c.is_large;
    }
    if (!any_large) throw std::invalid_argument("need at least one large center");
  }
};

inline void to_json(json& j, const FederationConfig& c) {
  j = json{{"rounds", c.rounds},
           {"rule", c.rule},
           {"train", c.train},
           {"model", c.model},
           {"master_seed", c.master_seed},
           {"eval_every", c.eval_every},
           {"threads", c.threads},
           {"init_mode", c.init_mode == InitMode::kCommon ? "common" : "per_center"}};
  if (c.centers.empty())
    j["centers"] = "default";
  else
    j["centers"] = c.centers;
}

inline void from_json(const json& j, FederationConfig& c) {
  if (j.contains("rounds")) j.at("rounds").get_to(c.rounds);
  if (j.contains("rule")) j.at("rule").get_to(c.rule);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("master_seed")) j.at("master_seed").get_to(c.master_seed);
  if (j.contains("eval_every")) j.at("eval_every").get_to(c.eval_every);
  if (j.contains("threads")) j.at("threads").get_to(c.threads);
  if (j.contains("init_mode")) {
    const auto s = j.at("init_mode").get<std::string>();
    if (s == "common") c.init_mode = InitMode::kCommon;
    else if (s == "per_center") c.init_mode = InitMode::kPerCenter;
    else throw std::invalid_argument("init_mode must be common or per_center");
  }
  if (j.contains("centers") && j.at("centers").is_array())
    j.at("centers").get_to(c.centers);
  c.validate();
}

struct PatientResult {
  int center_id = 0;
  std::string patient_id;
  bool large_pool = true;
  SegmentationMetrics metrics;
};

struct PoolStats {
  int n = 0;
  double pre = 0.0;
  double dsc = 0.0;
  double avd_ml = 0.0;
  double ald = 0.0;
  double lf1 = 0.0;
};

struct CategoryStats {
  LesionCategory category = LesionCategory::N;
  PoolStats stats;
};

struct PerCenterStats {
  int center_id = 0;
  PoolStats stats;
};

struct RoundRecord {
  int round = 0;
  PoolStats large;
  PoolStats limited;
  std::vector<PerCenterStats> per_center;
  std::vector<CategoryStats> per_category_large;
  std::vector<CategoryStats> per_category_limited;
};

struct ExperimentReport {
  std::string rule_name;
  json config_echo;
  std::vector<RoundRecord> rounds;
  std::vector<PatientResult> final_rows;
  ParameterSet final_params;
  std::uint64_t dataset_digest = 0;
  double duration_sec = 0.0;
  long total_epochs = 0;
};

namespace detail {

template <typename Pred>
inline PoolStats pool_stats(const std::vector<PatientResult>& rows, Pred&& keep) {
  PoolStats s;
  std::vector<RelativeErrors> errs;
  for (const auto& r : rows) {
    if (!keep(r)) continue;
    ++s.n;
    s.dsc += r.metrics.dsc;
    s.avd_ml += r.metrics.avd_ml;
    s.ald += r.metrics.ald;
    s.lf1 += r.metrics.lf1;
    errs.push_back(relative_errors(r.metrics));
  }
  if (s.n > 0) {
    s.dsc /= s.n;
    s.avd_ml /= s.n;
    s.ald /= s.n;
    s.lf1 /= s.n;
    s.pre = pre(errs);
  }
  return s;
}

inline RoundRecord make_round_record(int round, const std::vector<PatientResult>& rows) {
  RoundRecord rec;
  rec.round = round;
  rec.large = pool_stats(rows, [](const PatientResult& r) { return r.large_pool; });
  rec.limited = pool_stats(rows, [](const PatientResult& r) { return !r.large_pool; });
  std::map<int, char> seen_centers;
  for (const auto& r : rows) seen_centers.emplace(r.center_id, 0);
  for (const auto& [cid, unused] : seen_centers) {
    PerCenterStats pcs;
    pcs.center_id = cid;
    pcs.stats = pool_stats(rows, [cid](const PatientResult& r) { return r.center_id == cid; });
    rec.per_center.push_back(pcs);
  }
  for (int cat = 0; cat < 4; ++cat) {
    const auto c = static_cast<LesionCategory>(cat);
    CategoryStats cs;
    cs.category = c;
    cs.stats = pool_stats(rows, [c](const PatientResult& r) {
      return r.large_pool && r.metrics.category == c;
    });
    if (cs.stats.n > 0) rec.per_category_large.push_back(cs);
    cs.stats = pool_stats(rows, [c](const PatientResult& r) {
      return !r.large_pool && r.metrics.category == c;
    });
    if (cs.stats.n > 0) rec.per_category_limited.push_back(cs);
  }
  return rec;
}

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace detail

// Evaluate a model on every large center's test split and every limited
// center's full (test-only) set.
inline std::vector<PatientResult> evaluate_model(
    const ParameterSet& params, const std::vector<CenterDataset>& datasets,
    const ModelConfig& model) {
  std::vector<PatientResult> rows;
  for (const auto& ds : datasets) {
    for (const auto& study : ds.test) {
      const Prediction pred = forward(params, study, model);
      const Mask mask = predict_mask(pred, model.threshold);
      PatientResult row;
      row.center_id = ds.profile.center_id;
      row.patient_id = study.patient_id;
      row.large_pool = ds.profile.is_large;
      row.metrics = evaluate_patient(mask, study.gt_mask, study.spacing);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::vector<CenterDataset> build_federation(const FederationConfig& config) {
  config.validate();
  std::vector<CenterDataset> datasets;
  for (const auto& profile : config.resolved_centers())
    datasets.push_back(generate_center(profile));
  return datasets;
}

inline std::uint64_t federation_digest(const std::vector<CenterDataset>& datasets) {
  Fnv1a h;
  for (const auto& ds : datasets) h.update_value(ds.digest());
  return h.digest();
}

// CSV bodies. rounds.csv has one row per evaluated round and pool;
// per_patient.csv lists the final-round evaluation of every test patient.
inline std::string rounds_csv_string(const ExperimentReport& report) {
  std::string out = "round,rule,pool,pre,dsc,avd_ml,ald,lf1\n";
  using detail::fmt_g;
  for (const auto& rec : report.rounds) {
    const auto emit = [&](const char* pool, const PoolStats& s) {
      if (s.n == 0) return;
      out += std::to_string(rec.round) + "," + report.rule_name + "," + pool + "," +
             fmt_g(s.pre) + "," + fmt_g(s.dsc) + "," + fmt_g(s.avd_ml) + "," +
             fmt_g(s.ald) + "," + fmt_g(s.lf1) + "\n";
    };
    emit("large", rec.large);
    emit("limited", rec.limited);
  }
  return out;
}

inline std::string per_patient_csv_string(const ExperimentReport& report) {
  std::string out =
      "rule,pool,center_id,patient_id,category,dsc,avd_ml,ald,lf1,"
      "gt_volume_ml,gt_lesion_count\n";
  using detail::fmt_g;
  for (const auto& r : report.final_rows) {
    out += report.rule_name;
    out += r.large_pool ? ",large," : ",limited,";
    out += std::to_string(r.center_id) + "," + r.patient_id + ",";
    out += category_char(r.metrics.category);
    out += "," + fmt_g(r.metrics.dsc) + "," + fmt_g(r.metrics.avd_ml) + "," +
           std::to_string(r.metrics.ald) + "," + fmt_g(r.metrics.lf1) + "," +
           fmt_g(r.metrics.gt_volume_ml) + "," +
           std::to_string(r.metrics.gt_lesion_count) + "\n";
  }
  return out;
}

inline std::uint64_t report_digest(const ExperimentReport& report) {
  Fnv1a h;
  h.update_string(rounds_csv_string(report));
  h.update_string(per_patient_csv_string(report));
  h.update_value(report.final_params.digest());
  return h.digest();
}

namespace detail {

inline void to_json_pool(json& j, const PoolStats& s) {
  j = json{{"n", s.n},     {"pre", s.pre}, {"dsc", s.dsc},
           {"avd_ml", s.avd_ml}, {"ald", s.ald}, {"lf1", s.lf1}};
}

inline json round_record_json(const RoundRecord& rec) {
  json j;
  j["round"] = rec.round;
  to_json_pool(j["large"], rec.large);
  to_json_pool(j["limited"], rec.limited);
  j["per_center"] = json::array();
  for (const auto& pcs : rec.per_center) {
    json e;
    e["center_id"] = pcs.center_id;
    to_json_pool(e["stats"], pcs.stats);
    j["per_center"].push_back(e);
  }
  const auto cats = [](const std::vector<CategoryStats>& v) {
    json arr = json::array();
    for (const auto& cs : v) {
      json e;
      e["category"] = std::string(1, category_char(cs.category));
      to_json_pool(e["stats"], cs.stats);
      arr.push_back(e);
    }
    return arr;
  };
  j["per_category_large"] = cats(rec.per_category_large);
  j["per_category_limited"] = cats(rec.per_category_limited);
  return j;
}

inline char hex_digit(unsigned v) { return "0123456789abcdef"[v & 0xf]; }

inline std::string hex64(std::uint64_t v) {
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = hex_digit(static_cast<unsigned>(v));
    v >>= 4;
  }
  return s;
}

}  // namespace detail

inline json report_json(const ExperimentReport& report) {
  json j;
  j["rule"] = report.rule_name;
  j["config"] = report.config_echo;
  j["dataset_digest"] = detail::hex64(report.dataset_digest);
  j["report_digest"] = detail::hex64(report_digest(report));
  j["duration_sec"] = report.duration_sec;
  j["total_epochs"] = report.total_epochs;
  j["rounds"] = json::array();
  for (const auto& rec : report.rounds) j["rounds"].push_back(detail::round_record_json(rec));
  if (!report.rounds.empty()) {
    const auto& last = report.rounds.back();
    json f;
    detail::to_json_pool(f["large"], last.large);
    detail::to_json_pool(f["limited"], last.limited);
    j["final"] = f;
  }
  return j;
}

inline void write_report_files(const std::filesystem::path& dir,
                               const ExperimentReport& report) {
  std::filesystem::create_directories(dir);
  const auto dump = [&dir](const char* name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw std::runtime_error(std::string("cannot write ") + name);
    out << body;
  };
  dump("rounds.csv", rounds_csv_string(report));
  dump("per_patient.csv", per_patient_csv_string(report));
  dump("report.json", report_json(report).dump(2) + "\n");
}

namespace detail {

// Train all large centers for one round, at most `threads` concurrently.
// Results land in center order, so the schedule cannot affect the output.
inline std::vector<ParameterSet> train_round(
    const std::vector<const CenterDataset*>& large,
    const std::vector<TrainConfig>& cfgs, const ParameterSet& start,
    const std::vector<const ParameterSet*>& starts, const ModelConfig& model,
    const ParameterSet* anchor, int threads) {
  std::vector<ParameterSet> locals(large.size());
  const auto task = [&](std::size_t i) {
    const ParameterSet& s = starts.empty() ? start : *starts[i];
    const ParameterSet* a = anchor != nullptr ? (starts.empty() ? anchor : starts[i]) : nullptr;
    locals[i] = train_local(s, large[i]->train, model, cfgs[i], a);
  };
  if (threads <= 1) {
    for (std::size_t i = 0; i < large.size(); ++i) task(i);
    return locals;
  }
  std::size_t next = 0;
  while (next < large.size()) {
    std::vector<std::future<void>> wave;
    for (int t = 0; t < threads && next < large.size(); ++t, ++next)
      wave.push_back(std::async(std::launch::async, task, next));
    for (auto& f : wave) f.get();
  }
  return locals;
}

}  // namespace detail

// One full federated experiment: a common seeded model is broadcast, each
// round all large centers fine-tune it locally, the server fuses the local
// models under the rule, and the fused model is evaluated on the large test
// splits and the limited centers. FedProx anchors each local run at the
// incoming federated parameters.
inline ExperimentReport run_federated(const FederationConfig& config,
                                      const std::vector<CenterDataset>& datasets,
                                      const std::filesystem::path& outdir = {}) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<const CenterDataset*> large;
  std::vector<std::size_t> sizes;
  for (const auto& ds : datasets) {
    if (!ds.profile.is_large) continue;
    large.push_back(&ds);
    sizes.push_back(ds.train.size());
  }
  if (large.empty()) throw std::invalid_argument("no large centers in federation");

  const bool fedprox = config.rule.kind == RuleKind::kFedProx;

  ExperimentReport report;
  report.rule_name = config.rule.name();
  report.config_echo = config;
  report.dataset_digest = federation_digest(datasets);
  report.total_epochs = static_cast<long>(config.rounds) * config.train.epochs_per_round;

  ParameterSet fed = init_params(config.model, derive_seed(config.master_seed, kSeedModelInit));
  std::vector<ParameterSet> center_inits;
  if (config.init_mode == InitMode::kPerCenter) {
    for (const auto* ds : large)
      center_inits.push_back(
          init_params(config.model, derive_seed(ds->profile.seed, kSeedModelInit)));
  }

  for (int round = 1; round <= config.rounds; ++round) {
    std::vector<TrainConfig> cfgs(large.size(), config.train);
    for (std::size_t i = 0; i < large.size(); ++i) {
      cfgs[i].seed = derive_seed(large[i]->profile.seed, kSeedRound,
                                 static_cast<std::uint64_t>(round));
      cfgs[i].mu = fedprox ? config.rule.mu : 0.0;
    }
    std::vector<const ParameterSet*> starts;
    if (round == 1 && config.init_mode == InitMode::kPerCenter)
      for (const auto& p : center_inits) starts.push_back(&p);

    const auto locals = detail::train_round(large, cfgs, fed, starts, config.model,
                                            fedprox ? &fed : nullptr, config.threads);
    fed = aggregate(config.rule, locals, sizes);

    if (round % config.eval_every == 0 || round == config.rounds) {
      auto rows = evaluate_model(fed, datasets, config.model);
      report.rounds.push_back(detail::make_round_record(round, rows));
      if (round == config.rounds) report.final_rows = std::move(rows);
      if (!outdir.empty()) {
        const auto ckpt_dir = outdir / "checkpoints";
        std::filesystem::create_directories(ckpt_dir);
        char name[32];
        std::snprintf(name, sizeof(name), "round_%03d.fpk", round);
        save_checkpoint(ckpt_dir / name, fed,
                        {round, report.rule_name, config.master_seed});
      }
    }
  }

  report.final_params = std::move(fed);
  report.duration_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!outdir.empty()) write_report_files(outdir, report);
  return report;
}

inline ExperimentReport run_federated(const FederationConfig& config,
                                      const std::filesystem::path& outdir = {}) {
  return run_federated(config, build_federation(config), outdir);
}

// Centralized baseline: all large-center training splits pooled into one
// dataset, trained for the same total epoch budget in round-sized chunks,
// and evaluated exactly like the federated model.
inline ExperimentReport run_centralized(const FederationConfig& config,
                                        const std::vector<CenterDataset>& datasets,
                                        const std::filesystem::path& outdir = {}) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<PhantomStudy> pooled;
  for (const auto& ds : datasets)
    if (ds.profile.is_large)
      pooled.insert(pooled.end(), ds.train.begin(), ds.train.end());
  if (pooled.empty()) throw std::invalid_argument("no pooled training data");

  ExperimentReport report;
  report.rule_name = "centralized";
  report.config_echo = config;
  report.dataset_digest = federation_digest(datasets);
  report.total_epochs = static_cast<long>(config.rounds) * config.train.epochs_per_round;

  ParameterSet params =
      init_params(config.model, derive_seed(config.master_seed, kSeedModelInit));
  for (int round = 1; round <= config.rounds; ++round) {
    TrainConfig cfg = config.train;
    cfg.seed = derive_seed(config.train.seed, kSeedRound, static_cast<std::uint64_t>(round));
    cfg.mu = 0.0;
    params = train_local(params, pooled, config.model, cfg);
    if (round % config.eval_every == 0 || round == config.rounds) {
      auto rows = evaluate_model(params, datasets, config.model);
      report.rounds.push_back(detail::make_round_record(round, rows));
      if (round == config.rounds) report.final_rows = std::move(rows);
      if (!outdir.empty()) {
        const auto ckpt_dir = outdir / "checkpoints";
        std::filesystem::create_directories(ckpt_dir);
        char name[32];
        std::snprintf(name, sizeof(name), "round_%03d.fpk", round);
        save_checkpoint(ckpt_dir / name, params,
                        {round, report.rule_name, config.master_seed});
      }
    }
  }

  report.final_params = std::move(params);
  report.duration_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!outdir.empty()) write_report_files(outdir, report);
  return report;
}

inline ExperimentReport run_centralized(const FederationConfig& config,
                                        const std::filesystem::path& outdir = {}) {
  return run_centralized(config, build_federation(config), outdir);
}

inline const std::vector<std::string>& suite_model_order() {
  static const std::vector<std::string> order{
      "fedavg", "vanillaavg", "beta", "softmax", "fedprox", "centralized"};
  return order;
}

struct SuiteResult {
  std::map<std::string, ExperimentReport> reports;
  ModelRanking ranking_large;
  ModelRanking ranking_limited;
  std::uint64_t dataset_digest = 0;
};

inline std::string ranking_csv_string(const ModelRanking& r) {
  std::string out = "rank,model,pre\n";
  for (std::size_t i = 0; i < r.entries.size(); ++i)
    out += std::to_string(i + 1) + "," + r.entries[i].model + "," +
           detail::fmt_g(r.entries[i].pre) + "\n";
  return out;
}

// All five rules plus the centralized baseline on one shared dataset,
// ranked by large-pool and limited-pool PRE.
inline SuiteResult run_suite(const FederationConfig& config,
                             const std::filesystem::path& outdir = {}) {
  config.validate();
  const auto datasets = build_federation(config);
  SuiteResult suite;
  suite.dataset_digest = federation_digest(datasets);

  for (const auto& name : all_rule_names()) {
    FederationConfig cfg = config;
    cfg.rule = config.rule.name() == name ? config.rule : AggregationRule::parse(name);
    suite.reports.emplace(
        name, run_federated(cfg, datasets, outdir.empty() ? outdir : outdir / name));
  }
  suite.reports.emplace("centralized",
                        run_centralized(config, datasets,
                                        outdir.empty() ? outdir : outdir / "centralized"));

  std::map<std::string, double> pre_large, pre_limited;
  for (const auto& [name, report] : suite.reports) {
    if (report.dataset_digest != suite.dataset_digest)
      throw std::logic_error("suite runs disagree on dataset digest");
    const auto& last = report.rounds.back();
    pre_large[name] = last.large.pre;
    if (last.limited.n > 0) pre_limited[name] = last.limited.pre;
  }
  suite.ranking_large = rank_models(pre_large);
  if (!pre_limited.empty()) suite.ranking_limited = rank_models(pre_limited);

  if (!outdir.empty()) {
    std::filesystem::create_directories(outdir);
    std::string rounds_all, patients_all;
    bool first = true;
    for (const auto& name : suite_model_order()) {
      const auto& rep = suite.reports.at(name);
      std::string r = rounds_csv_string(rep), p = per_patient_csv_string(rep);
      if (!first) {
        r.erase(0, r.find('\n') + 1);  // drop repeated header
        p.erase(0, p.find('\n') + 1);
      }
      rounds_all += r;
      patients_all += p;
      first = false;
    }
    const auto dump = [&outdir](const std::string& name, const std::string& body) {
      std::ofstream out(outdir / name, std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write " + name);
      out << body;
    };
    dump("rounds.csv", rounds_all);
    dump("per_patient.csv", patients_all);
    dump("ranking_large.csv", ranking_csv_string(suite.ranking_large));
    dump("ranking_limited.csv", ranking_csv_string(suite.ranking_limited));
    std::string txt = "model ranking by PRE (lower is better)\n\nlarge centers:\n";
    for (std::size_t i = 0; i < suite.ranking_large.entries.size(); ++i)
      txt += "  " + std::to_string(i + 1) + ". " + suite.ranking_large.entries[i].model +
             "  pre=" + detail::fmt_g(suite.ranking_large.entries[i].pre) + "\n";
    txt += "\nlimited centers:\n";
    for (std::size_t i = 0; i < suite.ranking_limited.entries.size(); ++i)
      txt += "  " + std::to_string(i + 1) + ". " + suite.ranking_limited.entries[i].model +
             "  pre=" + detail::fmt_g(suite.ranking_limited.entries[i].pre) + "\n";
    dump("ranking.txt", txt);
  }
  return suite;
}

}  // namespace fedseg
