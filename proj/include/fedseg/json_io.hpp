#pragma once

#include <json.hpp>

#include "fedseg/aggregation.hpp"
#include "fedseg/model.hpp"
#include "fedseg/phantom.hpp"
#include "fedseg/trainer.hpp"

namespace fedseg {

using nlohmann::json;

inline void to_json(json& j, const Spacing& s) {
  j = json::array({s.x_mm, s.y_mm, s.slice_mm});
}

inline void from_json(const json& j, Spacing& s) {
  s.x_mm = j.at(0).get<double>();
  s.y_mm = j.at(1).get<double>();
  s.slice_mm = j.at(2).get<double>();
}

inline void to_json(json& j, const CenterProfile& p) {
  j = json{{"center_id", p.center_id},
           {"is_large", p.is_large},
           {"n_train", p.n_train},
           {"n_test", p.n_test},
           {"category_mix", p.category_mix},
           {"dwi_lesion_intensity", {p.dwi_lesion_mean, p.dwi_lesion_std}},
           {"adc_lesion_intensity", {p.adc_lesion_mean, p.adc_lesion_std}},
           {"voxel_spacing", p.voxel_spacing},
           {"image_size", {p.image_rows, p.image_cols}},
           {"seed", p.seed}};
}

inline void from_json(const json& j, CenterProfile& p) {
  j.at("center_id").get_to(p.center_id);
  j.at("is_large").get_to(p.is_large);
  j.at("n_train").get_to(p.n_train);
  j.at("n_test").get_to(p.n_test);
  j.at("category_mix").get_to(p.category_mix);
  p.dwi_lesion_mean = j.at("dwi_lesion_intensity").at(0).get<double>();
  p.dwi_lesion_std = j.at("dwi_lesion_intensity").at(1).get<double>();
  p.adc_lesion_mean = j.at("adc_lesion_intensity").at(0).get<double>();
  p.adc_lesion_std = j.at("adc_lesion_intensity").at(1).get<double>();
  j.at("voxel_spacing").get_to(p.voxel_spacing);
  p.image_rows = j.at("image_size").at(0).get<int>();
  p.image_cols = j.at("image_size").at(1).get<int>();
  j.at("seed").get_to(p.seed);
  p.validate();
}

inline void to_json(json& j, const ConvSpec& c) {
  j = json::array({c.in_ch, c.out_ch, c.kernel});
}

inline void from_json(const json& j, ConvSpec& c) {
  c.in_ch = j.at(0).get<int>();
  c.out_ch = j.at(1).get<int>();
  c.kernel = j.at(2).get<int>();
}

inline void to_json(json& j, const ModelConfig& m) {
  j = json{{"layers", m.layers},
           {"dice_weight", m.dice_weight},
           {"threshold", m.threshold}};
}

inline void from_json(const json& j, ModelConfig& m) {
  if (j.contains("layers")) j.at("layers").get_to(m.layers);
  if (j.contains("dice_weight")) j.at("dice_weight").get_to(m.dice_weight);
  if (j.contains("threshold")) j.at("threshold").get_to(m.threshold);
  m.validate();
}

inline void to_json(json& j, const TrainConfig& t) {
  j = json{{"epochs_per_round", t.epochs_per_round},
           {"batch_size", t.batch_size},
           {"learning_rate", t.learning_rate},
           {"mu", t.mu},
           {"seed", t.seed}};
}

inline void from_json(const json& j, TrainConfig& t) {
  if (j.contains("epochs_per_round")) j.at("epochs_per_round").get_to(t.epochs_per_round);
  if (j.contains("batch_size")) j.at("batch_size").get_to(t.batch_size);
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(t.learning_rate);
  if (j.contains("mu")) j.at("mu").get_to(t.mu);
  if (j.contains("seed")) j.at("seed").get_to(t.seed);
  t.validate();
}

inline void to_json(json& j, const AggregationRule& r) {
  j = json{{"name", r.name()}};
  if (r.kind == RuleKind::kBetaWeighting) j["beta"] = r.beta;
  if (r.kind == RuleKind::kFedProx) j["mu"] = r.mu;
}

inline void from_json(const json& j, AggregationRule& r) {
  r = AggregationRule::parse(j.at("name").get<std::string>());
  if (j.contains("beta")) j.at("beta").get_to(r.beta);
  if (j.contains("mu")) j.at("mu").get_to(r.mu);
  r.validate();
}

}  // namespace fedseg
