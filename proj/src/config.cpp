#include "lsadapt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "lsadapt/rng.hpp"

namespace lsadapt {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(const std::string& key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

long long to_int(const std::string& key, std::string_view v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::vector<double> to_doubles(const std::string& key, std::string_view v) {
  std::vector<double> out;
  for (const auto& piece : split_list(v)) out.push_back(to_double(key, piece));
  return out;
}

Vec3 to_vec3(const std::string& key, std::string_view v) {
  const auto xs = to_doubles(key, v);
  if (xs.size() != 3) throw ConfigError(key + ": expected three comma-separated numbers");
  return {xs[0], xs[1], xs[2]};
}

std::string join(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += format_double(xs[i]);
  }
  return out;
}

std::string vec3_text(const Vec3& v) { return join({v.x, v.y, v.z}); }

template <typename Target>
struct Field {
  std::string key;
  std::function<void(Target&, const std::string&)> set;
  std::function<std::string(const Target&)> get;
};

template <typename Target>
Field<Target> real(std::string key, double Target::*member) {
  return {key, [key, member](Target& t, const std::string& v) { t.*member = to_double(key, v); },
          [member](const Target& t) { return format_double(t.*member); }};
}

/// Fields of SimWorld reachable through `world_of`.
template <typename Target>
std::vector<Field<Target>> world_fields(std::function<SimWorld&(Target&)> world_of,
                                        std::function<const SimWorld&(const Target&)> cworld_of) {
  std::vector<Field<Target>> f;
  f.push_back({"spacing",
               [=](Target& t, const std::string& v) {
                 const Vec3 s = to_vec3("spacing", v);
                 try {
                   world_of(t).spacing = Spacing(s.x, s.y, s.z);
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError(std::string("spacing: ") + e.what());
                 }
               },
               [=](const Target& t) { return vec3_text(cworld_of(t).spacing.mm()); }});
  f.push_back({"bin_edges",
               [=](Target& t, const std::string& v) {
                 try {
                   world_of(t).bins = BinningConfig(to_doubles("bin_edges", v));
                 } catch (const ConfigError&) {
                   throw;
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError(std::string("bin_edges: ") + e.what());
                 }
               },
               [=](const Target& t) {
                 const auto e = cworld_of(t).bins.edges();
                 return join({e.begin(), e.end()});
               }});
  f.push_back({"field", [=](Target& t, const std::string& v) { world_of(t).field = to_vec3("field", v); },
               [=](const Target& t) { return vec3_text(cworld_of(t).field); }});
  auto world_real = [&](std::string key, double SimWorld::*m) {
    f.push_back({key, [=](Target& t, const std::string& v) { world_of(t).*m = to_double(key, v); },
                 [=](const Target& t) { return format_double(cworld_of(t).*m); }});
  };
  world_real("min_volume_cc", &SimWorld::min_volume_cc);
  world_real("max_volume_cc", &SimWorld::max_volume_cc);
  world_real("max_aspect", &SimWorld::max_aspect);
  return f;
}

const std::vector<Field<ExperimentConfig>>& experiment_fields() {
  using C = ExperimentConfig;
  static const std::vector<Field<C>> fields = [] {
    std::vector<Field<C>> f;
    f.push_back({"seed", [](C& c, const std::string& v) { c.seed = to_u64("seed", v); },
                 [](const C& c) { return std::to_string(c.seed); }});
    f.push_back({"rounds",
                 [](C& c, const std::string& v) { c.loop.rounds = static_cast<int>(to_int("rounds", v)); },
                 [](const C& c) { return std::to_string(c.loop.rounds); }});
    auto loop_real = [&](std::string key, double LoopConfig::*m) {
      f.push_back({key, [=](C& c, const std::string& v) { c.loop.*m = to_double(key, v); },
                   [=](const C& c) { return format_double(c.loop.*m); }});
    };
    loop_real("lambda_start", &LoopConfig::lambda_start);
    loop_real("lambda_end", &LoopConfig::lambda_end);
    auto ema_real = [&](std::string key, double EmaConfig::*m) {
      f.push_back({key, [=](C& c, const std::string& v) { c.loop.ema.*m = to_double(key, v); },
                   [=](const C& c) { return format_double(c.loop.ema.*m); }});
    };
    ema_real("alpha_mu", &EmaConfig::alpha_mu);
    ema_real("alpha_h", &EmaConfig::alpha_h);
    ema_real("beta", &EmaConfig::beta);
    loop_real("tau", &LoopConfig::tau);
    loop_real("nms_iou", &LoopConfig::nms_iou);
    loop_real("top_p", &LoopConfig::top_p);
    loop_real("fixed_threshold", &LoopConfig::fixed_threshold);
    f.push_back({"num_anchors",
                 [](C& c, const std::string& v) {
                   c.loop.num_anchors = static_cast<int>(to_int("num_anchors", v));
                 },
                 [](const C& c) { return std::to_string(c.loop.num_anchors); }});
    loop_real("train_rate", &LoopConfig::train_rate);
    f.push_back({"prior_input",
                 [](C& c, const std::string& v) {
                   try {
                     c.loop.prior_input = parse_prior_input(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("prior_input: ") + e.what());
                   }
                 },
                 [](const C& c) { return std::string(to_string(c.loop.prior_input)); }});
    f.push_back({"arms",
                 [](C& c, const std::string& v) {
                   c.arms.clear();
                   try {
                     for (const auto& a : split_list(v)) c.arms.push_back(ArmSpec::parse(a));
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("arms: ") + e.what());
                   }
                 },
                 [](const C& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.arms.size(); ++i) {
                     if (i) out += ",";
                     out += c.arms[i].name();
                   }
                   return out;
                 }});
    f.push_back({"source_preset", [](C& c, const std::string& v) { c.source_preset = v; },
                 [](const C& c) { return c.source_preset; }});
    f.push_back({"target_preset", [](C& c, const std::string& v) { c.target_preset = v; },
                 [](const C& c) { return c.target_preset; }});
    f.push_back({"source_subjects",
                 [](C& c, const std::string& v) {
                   c.source_subjects = static_cast<int>(to_int("source_subjects", v));
                 },
                 [](const C& c) { return std::to_string(c.source_subjects); }});
    f.push_back({"target_subjects",
                 [](C& c, const std::string& v) {
                   c.target_subjects = static_cast<int>(to_int("target_subjects", v));
                 },
                 [](const C& c) { return std::to_string(c.target_subjects); }});
    f.push_back(real<C>("target_train_fraction", &C::target_train_fraction));
    f.push_back(real<C>("target_val_fraction", &C::target_val_fraction));
    for (auto& w : world_fields<C>([](C& c) -> SimWorld& { return c.world; },
                                   [](const C& c) -> const SimWorld& { return c.world; })) {
      f.push_back(std::move(w));
    }
    auto det_real = [&](std::string key, double DetectorParams::*m) {
      f.push_back({"detector." + key,
                   [=](C& c, const std::string& v) { c.detector.*m = to_double("detector." + key, v); },
                   [=](const C& c) { return format_double(c.detector.*m); }});
    };
    det_real("recall_mixing", &DetectorParams::recall_mixing);
    det_real("positive_iou", &DetectorParams::positive_iou);
    det_real("jitter_sigma", &DetectorParams::jitter_sigma);
    det_real("tp_conf_base", &DetectorParams::tp_conf_base);
    det_real("tp_conf_size_gain", &DetectorParams::tp_conf_size_gain);
    det_real("tp_conf_skill_gain", &DetectorParams::tp_conf_skill_gain);
    det_real("tp_conf_fit_gain", &DetectorParams::tp_conf_fit_gain);
    det_real("tp_conf_sd", &DetectorParams::tp_conf_sd);
    det_real("fp_conf_mean", &DetectorParams::fp_conf_mean);
    det_real("fp_conf_sd", &DetectorParams::fp_conf_sd);
    det_real("min_fp_rate", &DetectorParams::min_fp_rate);
    det_real("support_per_subject", &DetectorParams::support_per_subject);
    det_real("size_transfer", &DetectorParams::size_transfer);
    det_real("initial_recall", &DetectorParams::initial_recall);
    det_real("initial_fp_rate", &DetectorParams::initial_fp_rate);
    det_real("pretrain_rate", &DetectorParams::pretrain_rate);
    f.push_back({"detector.pretrain_iterations",
                 [](C& c, const std::string& v) {
                   c.detector.pretrain_iterations =
                       static_cast<int>(to_int("detector.pretrain_iterations", v));
                 },
                 [](const C& c) { return std::to_string(c.detector.pretrain_iterations); }});
    det_real("target_transfer", &DetectorParams::target_transfer);
    det_real("target_fp_factor", &DetectorParams::target_fp_factor);
    return f;
  }();
  return fields;
}

const std::vector<Field<CohortSpec>>& cohort_fields() {
  using S = CohortSpec;
  static const std::vector<Field<S>> fields = [] {
    std::vector<Field<S>> f;
    f.push_back({"domain",
                 [](S& s, const std::string& v) {
                   try {
                     s.domain = parse_domain(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("domain: ") + e.what());
                   }
                 },
                 [](const S& s) { return std::string(to_string(s.domain)); }});
    f.push_back({"n_subjects",
                 [](S& s, const std::string& v) { s.n_subjects = static_cast<int>(to_int("n_subjects", v)); },
                 [](const S& s) { return std::to_string(s.n_subjects); }});
    f.push_back(real<S>("mean_lesions", &S::mean_lesions));
    f.push_back(real<S>("dispersion", &S::dispersion));
    f.push_back({"size_hist", [](S& s, const std::string& v) { s.size_hist = to_doubles("size_hist", v); },
                 [](const S& s) { return join(s.size_hist); }});
    f.push_back({"seed", [](S& s, const std::string& v) { s.seed = to_u64("seed", v); },
                 [](const S& s) { return std::to_string(s.seed); }});
    for (auto& w : world_fields<S>([](S& s) -> SimWorld& { return s.world; },
                                   [](const S& s) -> const SimWorld& { return s.world; })) {
      f.push_back(std::move(w));
    }
    return f;
  }();
  return fields;
}

template <typename Target>
void apply(Target& target, const std::vector<Field<Target>>& fields,
           const std::vector<std::pair<std::string, std::string>>& kvs) {
  for (const auto& [key, value] : kvs) {
    const auto it = std::find_if(fields.begin(), fields.end(),
                                 [&](const Field<Target>& f) { return f.key == key; });
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(target, value);
  }
}

template <typename Target>
std::string serialize(const Target& target, const std::vector<Field<Target>>& fields) {
  std::string out;
  for (const auto& f : fields) out += f.key + " = " + f.get(target) + "\n";
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig cfg;
  apply(cfg, experiment_fields(), parse_key_values(text));
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  return serialize(cfg, experiment_fields());
}

std::string config_digest(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(serialize_experiment_config(cfg))));
  return buf;
}

CohortSpec parse_cohort_spec(std::string_view text) {
  auto kvs = parse_key_values(text);
  CohortSpec spec;
  const auto preset = std::find_if(kvs.begin(), kvs.end(), [](const auto& kv) { return kv.first == "preset"; });
  if (preset != kvs.end()) {
    try {
      spec = preset_by_name(preset->second, 0, 0);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("preset: ") + e.what());
    }
    kvs.erase(preset);
  }
  apply(spec, cohort_fields(), kvs);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

std::string serialize_cohort_spec(const CohortSpec& spec) { return serialize(spec, cohort_fields()); }

}  // namespace lsadapt
