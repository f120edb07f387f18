#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "polymix/experiment.hpp"
#include "polymix/models/traits.hpp"

namespace polymix::cli {

using nlohmann::json;

namespace {

struct KindName {
  Kind kind;
  const char* name;
  const char* alias;
};
constexpr KindName kKinds[] = {
    {Kind::Tail, "tail", "tail"},           {Kind::Sweep, "sweep", "sweep"},
    {Kind::Scan, "scan", "grid-scan"},      {Kind::Confirm, "confirm", "confirm"},
    {Kind::Burnin, "burnin", "burn-in"},    {Kind::Stabilize, "stabilize", "stabilization"},
    {Kind::Correlate, "correlate", "correlation"}, {Kind::Couplab, "couplab", "couplab"},
};

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

/// Reads one JSON object: every access records the key, typed getters fill
/// defaults into `out`, and finish() reports keys that were never read.
class Section {
 public:
  Section(std::vector<std::string>& errors, const json& in, std::string path)
      : errors_(&errors), in_(in.is_object() ? in : json::object()), path_(std::move(path)) {
    if (!in.is_object() && !in.is_null()) error(path_.empty() ? "config" : path_, "must be an object");
  }

  const json& out() const { return out_; }
  json& out() { return out_; }
  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return in_.contains(key); }
  void error(const std::string& where, const std::string& what) { errors_->push_back(where + " " + what); }
  void error_at(const std::string& key, const std::string& what) { error(join(path_, key), what); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    return in_.contains(key) ? &in_.at(key) : nullptr;
  }

  /// Real number with a default; checks run only on present values.
  std::optional<double> number(const std::string& key, std::optional<double> def,
                               const std::function<const char*(double)>& check = {}) {
    const json* v = raw(key);
    if (!v) {
      if (!def) {
        error_at(key, "is required");
        return std::nullopt;
      }
      out_[key] = *def;
      return def;
    }
    if (!v->is_number()) {
      error_at(key, "must be a number");
      return std::nullopt;
    }
    const double x = v->get<double>();
    if (!std::isfinite(x)) {
      error_at(key, "must be finite");
      return std::nullopt;
    }
    if (check) {
      if (const char* msg = check(x)) {
        error_at(key, msg);
        return std::nullopt;
      }
    }
    out_[key] = *v;
    return x;
  }

  std::optional<std::uint64_t> count(const std::string& key, std::optional<std::uint64_t> def,
                                     std::uint64_t min_value) {
    const json* v = raw(key);
    if (!v) {
      if (!def) {
        error_at(key, "is required");
        return std::nullopt;
      }
      out_[key] = *def;
      return def;
    }
    // Accept integral doubles such as 1e6.
    if (!v->is_number() || (v->is_number_float() && v->get<double>() != std::floor(v->get<double>())) ||
        (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0) ||
        (v->is_number_float() && v->get<double>() < 0)) {
      error_at(key, "must be a nonnegative integer");
      return std::nullopt;
    }
    const auto n = v->is_number_float() ? static_cast<std::uint64_t>(v->get<double>()) : v->get<std::uint64_t>();
    if (n < min_value) {
      error_at(key, "must be >= " + std::to_string(min_value));
      return std::nullopt;
    }
    out_[key] = n;
    return n;
  }

  std::optional<std::string> string(const std::string& key, std::optional<std::string> def) {
    const json* v = raw(key);
    if (!v) {
      if (!def) {
        error_at(key, "is required");
        return std::nullopt;
      }
      out_[key] = *def;
      return def;
    }
    if (!v->is_string()) {
      error_at(key, "must be a string");
      return std::nullopt;
    }
    out_[key] = *v;
    return v->get<std::string>();
  }

  std::optional<bool> boolean(const std::string& key, bool def) {
    const json* v = raw(key);
    if (!v) {
      out_[key] = def;
      return def;
    }
    if (!v->is_boolean()) {
      error_at(key, "must be a boolean");
      return std::nullopt;
    }
    out_[key] = *v;
    return v->get<bool>();
  }

  std::optional<std::vector<double>> numbers(const std::string& key, bool required) {
    const json* v = raw(key);
    if (!v) {
      if (required) error_at(key, "is required");
      return std::nullopt;
    }
    if (!v->is_array() || v->empty()) {
      error_at(key, "must be a nonempty array of numbers");
      return std::nullopt;
    }
    std::vector<double> xs;
    for (const auto& e : *v) {
      if (!e.is_number() || !std::isfinite(e.get<double>())) {
        error_at(key, "must contain only finite numbers");
        return std::nullopt;
      }
      xs.push_back(e.get<double>());
    }
    out_[key] = *v;
    return xs;
  }

  /// Nested object; absent and optional gives an empty object.
  Section child(const std::string& key, bool required = false) {
    const json* v = raw(key);
    if (!v && required) error_at(key, "is required");
    return Section(*errors_, v ? *v : json(), join(path_, key));
  }

  void put(const std::string& key, json value) {
    seen_.insert(key);
    out_[key] = std::move(value);
  }

  void finish() {
    for (const auto& [key, _] : in_.items()) {
      if (!seen_.count(key)) error_at(key, "is not a recognized key");
    }
  }

 private:
  std::vector<std::string>* errors_;
  json in_;
  std::string path_;
  json out_ = json::object();
  std::set<std::string> seen_;
};

const char* positive(double x) { return x > 0.0 ? nullptr : "must be > 0"; }
const char* nonnegative(double x) { return x >= 0.0 ? nullptr : "must be >= 0"; }
const char* above_one(double x) { return x > 1.0 ? nullptr : "must be > 1"; }

std::string models_list() { return "see, rhm, countdown, telegraph"; }

// --- model / refset -----------------------------------------------------------

std::optional<std::string> parse_model(Section& s) {
  const auto name = s.string("name", std::nullopt);
  if (!name) return std::nullopt;
  if (*name == "see") {
    s.count("n_sites", 3, 1);
    s.number("T_L", 1.0, positive);
    s.number("T_R", 2.0, positive);
  } else if (*name == "rhm") {
    s.count("n_sites", 3, 1);
    s.number("T_L", 1.0, positive);
    s.number("T_R", 2.0, positive);
    s.number("rho_L", 1.0, positive);
    s.number("rho_R", 1.0, positive);
    s.number("m", 1.0, nonnegative);
    s.number("S", 1.0, positive);
  } else if (*name == "countdown") {
    s.number("C", 4.0, positive);
    s.number("beta", 2.0, above_one);
    s.number("holding", 1.0, positive);
  } else if (*name == "telegraph") {
    s.number("leave", 1.0, positive);
    s.number("enter", 1.0, positive);
  } else {
    s.error_at("name", "must be one of: " + models_list());
    return std::nullopt;
  }
  return name;
}

void bounds(Section& s, const char* lo_key, const char* hi_key, double lo_def, double hi_def,
            const std::function<const char*(double)>& lo_check) {
  const auto lo = s.number(lo_key, lo_def, lo_check);
  const auto hi = s.number(hi_key, hi_def, nonnegative);
  if (lo && hi && *lo > *hi) {
    s.error(join(s.path(), lo_key), std::string("(lower bound) exceeds ") + join(s.path(), hi_key));
  }
}

void parse_refset(Section& s, const std::string& model) {
  if (model == "see") {
    bounds(s, "lo", "hi", 0.1, 100.0, positive);
  } else if (model == "rhm") {
    s.count("k_max", 40, 0);
    bounds(s, "s_lo", "s_hi", 0.0, 100.0, nonnegative);
    bounds(s, "x_lo", "x_hi", 0.1, 100.0, positive);
  } else if (model == "countdown") {
    s.count("max_level", 0, 0);
  }
}

/// Decodes a state string and checks it against the model's dimensions.
std::optional<std::string> check_state(Section& s, const std::string& key, const json& model,
                                       bool required) {
  const auto text = s.string(key, required ? std::nullopt : std::optional<std::string>(""));
  if (!text || (!required && text->empty())) {
    if (!required) s.out().erase(key);
    return std::nullopt;
  }
  const std::string name = model.value("name", "");
  try {
    if (name == "see") {
      const auto st = models::decode_see(*text);
      if (st.energies.size() != model.at("n_sites").get<std::size_t>() || !st.valid()) {
        s.error_at(key, "must list n_sites positive energies");
        return std::nullopt;
      }
    } else if (name == "rhm") {
      const auto st = models::decode_rhm(*text);
      if (st.sites.size() != model.at("n_sites").get<std::size_t>() || !st.valid()) {
        s.error_at(key, "must describe n_sites valid sites");
        return std::nullopt;
      }
    } else if (name == "countdown") {
      const auto st = models::decode_countdown(*text);
      if (st.level < 0 || !(st.hold > 0.0)) {
        s.error_at(key, "must be 'level,hold' with level >= 0 and hold > 0");
        return std::nullopt;
      }
    } else if (name == "telegraph") {
      models::ModelTraits<models::TelegraphModel>::decode(*text);
    }
  } catch (const std::exception& e) {
    s.error_at(key, std::string("is not a valid state: ") + e.what());
    return std::nullopt;
  }
  return text;
}

void check_observable(Section& s, const std::string& key, const json& model, const char* def) {
  const auto spec = s.string(key, def ? std::optional<std::string>(def) : std::nullopt);
  if (!spec) return;
  const std::string name = model.value("name", "");
  const std::size_t n_sites = model.contains("n_sites") ? model.at("n_sites").get<std::size_t>() : 0;
  try {
    if (name == "see") {
      const auto obs = models::ModelTraits<models::SeeModel>::observable(*spec);
      obs(models::SeeState{std::vector<double>(n_sites, 1.0)});
    } else if (name == "rhm") {
      const auto obs = models::ModelTraits<models::RhmModel>::observable(*spec);
      obs(models::RhmState{std::vector<models::RhmSite>(n_sites)});
    } else if (name == "countdown") {
      models::ModelTraits<models::CountdownModel>::observable(*spec);
    } else if (name == "telegraph") {
      models::ModelTraits<models::TelegraphModel>::observable(*spec);
    }
  } catch (const std::exception& e) {
    s.error_at(key, std::string("is not a valid observable: ") + e.what());
  }
}

void parse_tail(Section& s) {
  const auto h = s.number("h", 0.1, positive);
  const auto t_max = s.number("t_max", 1000.0, positive);
  if (h && t_max && !(*t_max > *h)) s.error_at("t_max", "must exceed " + join(s.path(), "h"));
  s.count("per_decade", 40, 1);
  s.count("samples", 100000, 1);
  s.count("m_min", 100, 1);
  s.number("z", 1.96, positive);
  s.count("batches", 10, 2);
  s.number("beta", 2.0, positive);
  s.number("fit_t_min", 0.0, nonnegative);
  s.number("fit_decades", 1.0, positive);
  s.boolean("false_returns", false);
}

void parse_burn(Section& s, double default_time) {
  s.number("burn_time", default_time, positive);
  s.count("ensemble_size", 100000, 1);
}

double default_burn_time(const std::string& model) { return model == "see" ? 200.0 : 100.0; }

/// Exactly one initial-state source; "sampler": "initial" when none given.
void parse_initial(Section& s, const json& model) {
  const char* sources[] = {"state", "sampler", "ensemble", "burn_in"};
  int present = 0;
  for (const char* k : sources) present += s.has(k) ? 1 : 0;
  if (present > 1) s.error(s.path(), "must give exactly one of state, sampler, ensemble, burn_in");
  if (s.has("state")) {
    check_state(s, "state", model, true);
  } else if (s.has("ensemble")) {
    s.string("ensemble", std::nullopt);
  } else if (s.has("burn_in")) {
    auto b = s.child("burn_in");
    parse_burn(b, default_burn_time(model.value("name", "")));
    b.finish();
    s.put("burn_in", b.out());
  } else {
    const auto v = s.string("sampler", "initial");
    if (v && *v != "initial") s.error_at("sampler", "must be 'initial'");
  }
  for (const char* k : sources) {
    if (present > 1) s.raw(k);
  }
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

void parse_times(Section& s, double default_t_max, std::size_t default_points) {
  if (const auto ts = s.numbers("times", false)) {
    for (std::size_t k = 0; k < ts->size(); ++k) {
      if ((*ts)[k] < 0.0 || (k > 0 && !((*ts)[k] > (*ts)[k - 1]))) {
        s.error_at("times", "must be nonnegative and strictly increasing");
        return;
      }
    }
    return;
  }
  const auto t_max = s.number("t_max", default_t_max, positive);
  const auto points = s.count("points", default_points, 2);
  if (t_max && points) {
    s.out().erase("t_max");
    s.out().erase("points");
    s.out()["times"] = linspace(0.0, *t_max, *points);
  }
}

void parse_couplab(Section& s) {
  if (s.has("chain") == s.has("chain_file")) {
    s.error(s.path(), "must give exactly one of chain, chain_file");
  }
  if (const json* c = s.raw("chain")) s.put("chain", *c);
  s.string("chain_file", std::string());
  if (s.out()["chain_file"] == "") s.out().erase("chain_file");
  for (const char* k : {"mu", "nu"}) {
    const json* v = s.raw(k);
    if (!v) {
      s.error_at(k, "is required");
    } else if (!v->is_string() && !v->is_array()) {
      s.error_at(k, "must be a state name or a probability vector");
    } else {
      s.put(k, *v);
    }
  }
  s.count("n_max", 200, 1);
  s.count("samples", 100000, 1);
}

}  // namespace

std::optional<Kind> parse_kind(std::string_view name) {
  for (const auto& k : kKinds) {
    if (name == k.name || name == k.alias) return k.kind;
  }
  return std::nullopt;
}

const char* kind_name(Kind k) {
  for (const auto& e : kKinds) {
    if (e.kind == k) return e.name;
  }
  return "?";
}

namespace {
std::string join_errors(const std::vector<std::string>& errors) {
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}
}  // namespace

ValidationError::ValidationError(std::vector<std::string> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

ValidationResult validate_config(std::string_view text, std::optional<Kind> expected) {
  ValidationResult r;
  json in;
  try {
    in = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    r.errors.push_back(std::string("config is not valid JSON: ") + e.what());
    return r;
  }
  if (!in.is_object()) {
    r.errors.push_back("config must be a JSON object");
    return r;
  }
  auto& errors = r.errors;
  Section root(errors, in, "");

  std::optional<Kind> kind;
  if (const json* k = root.raw("kind")) {
    if (!k->is_string() || !parse_kind(k->get<std::string>())) {
      root.error_at("kind", "must be one of: tail, sweep, scan, confirm, burnin, stabilize, correlate, couplab");
    } else {
      kind = parse_kind(k->get<std::string>());
      if (expected && *kind != *expected) {
        root.error_at("kind", std::string("is '") + kind_name(*kind) + "' but the subcommand is '" + kind_name(*expected) + "'");
      }
    }
  } else if (expected) {
    kind = expected;
  } else {
    root.error_at("kind", "is required");
  }

  ExperimentConfig cfg;
  if (const auto seed = root.count("seed", 1, 0)) cfg.seed = *seed;
  if (const json* w = root.raw("workers")) {
    if (!w->is_number_unsigned() || w->get<std::uint64_t>() < 1) {
      root.error_at("workers", "must be a positive integer");
    } else {
      cfg.workers = w->get<unsigned>();
    }
  }
  if (const json* o = root.raw("output_dir")) {
    if (!o->is_string() || o->get<std::string>().empty()) {
      root.error_at("output_dir", "must be a nonempty string");
    } else {
      cfg.output_dir = o->get<std::string>();
    }
  }
  root.out().erase("workers");

  if (!kind) {
    root.finish();
    return r;
  }
  cfg.kind = *kind;
  root.put("kind", kind_name(*kind));

  json model = json::object();
  if (*kind != Kind::Couplab) {
    auto m = root.child("model", true);
    const auto name = parse_model(m);
    m.finish();
    model = m.out();
    root.put("model", model);
    if (name && *kind != Kind::Burnin && *kind != Kind::Stabilize && *kind != Kind::Correlate) {
      auto rs = root.child("refset");
      parse_refset(rs, *name);
      rs.finish();
      root.put("refset", rs.out());
    }
    if (!name) {
      root.finish();
      return r;
    }
  }

  const std::string model_name = model.value("name", "");
  auto section = [&](const char* key, bool required, auto&& body) {
    auto s = root.child(key, required);
    body(s);
    s.finish();
    root.put(key, s.out());
  };
  auto tail_section = [&] { section("tail", false, [](Section& s) { parse_tail(s); }); };

  switch (*kind) {
    case Kind::Tail:
      tail_section();
      section("initial", false, [&](Section& s) { parse_initial(s, model); });
      break;
    case Kind::Sweep:
      tail_section();
      section("sweep", true, [&](Section& s) {
        check_state(s, "base", model, true);
        s.string("coordinate", std::nullopt);
        s.numbers("values", true);
      });
      break;
    case Kind::Scan:
      tail_section();
      section("scan", true, [&](Section& s) {
        check_state(s, "base", model, true);
        const json* axes = s.raw("axes");
        json out_axes = json::array();
        if (!axes || !axes->is_array() || axes->empty()) {
          s.error_at("axes", "must be a nonempty array");
        } else {
          for (std::size_t i = 0; i < axes->size(); ++i) {
            Section a(errors, (*axes)[i], join(s.path(), "axes[" + std::to_string(i) + "]"));
            a.string("coordinate", std::nullopt);
            if (a.has("values")) {
              a.numbers("values", true);
            } else {
              const auto lo = a.number("lo", std::nullopt, positive);
              const auto hi = a.number("hi", std::nullopt, positive);
              a.count("n", 4, 1);
              if (lo && hi && *lo > *hi) a.error(join(a.path(), "lo"), "(lower bound) exceeds " + join(a.path(), "hi"));
            }
            a.finish();
            out_axes.push_back(a.out());
          }
        }
        s.put("axes", out_axes);
        if (s.has("confirm_samples")) s.count("confirm_samples", std::nullopt, 1);
      });
      break;
    case Kind::Confirm:
      tail_section();
      section("confirm", true, [&](Section& s) {
        check_state(s, "state", model, true);
        s.count("samples", 10000000, 1);
      });
      break;
    case Kind::Burnin:
      section("burnin", false, [&](Section& s) { parse_burn(s, default_burn_time(model_name)); });
      break;
    case Kind::Stabilize:
      section("stabilize", false, [&](Section& s) {
        check_observable(s, "observable", model, model_name == "countdown" ? "at_atom" : model_name == "telegraph" ? "inside" : "energy:2");
        parse_times(s, default_burn_time(model_name), 21);
        s.count("trajectories", 10000, 2);
      });
      break;
    case Kind::Correlate:
      section("correlate", false, [&](Section& s) {
        const char* def = model_name == "countdown" ? "at_atom" : model_name == "telegraph" ? "inside" : "energy:2";
        check_observable(s, "xi", model, def);
        check_observable(s, "eta", model, def);
        parse_times(s, 50.0, 11);
        s.count("pairs", 100000, 40);
        if (s.has("ensemble") && s.has("burn_in")) s.error(s.path(), "must give at most one of ensemble, burn_in");
        if (s.has("ensemble")) {
          s.string("ensemble", std::nullopt);
        } else {
          auto b = s.child("burn_in");
          parse_burn(b, default_burn_time(model_name));
          b.finish();
          s.put("burn_in", b.out());
        }
      });
      break;
    case Kind::Couplab:
      section("couplab", true, [](Section& s) { parse_couplab(s); });
      break;
  }
  root.finish();
  if (errors.empty()) {
    cfg.normalized = root.out();
    r.config = std::move(cfg);
  }
  return r;
}

}  // namespace polymix::cli
