#include "decac/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace decac::config {

using nlohmann::json;

// ---------------------------------------------------------------------------
// TOML subset

namespace {

class TomlLine {
 public:
  TomlLine(const std::string& text, std::size_t line) : s_(text), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' ||
                                s_[pos_] == '\r')) {
      ++pos_;
    }
  }
  bool done() {
    skip_ws();
    return pos_ >= s_.size();
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::vector<std::string> key() {
    std::vector<std::string> parts;
    for (;;) {
      skip_ws();
      std::string part;
      if (peek() == '"') {
        part = string();
      } else {
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                    s_[pos_] == '_' || s_[pos_] == '-')) {
          part += s_[pos_++];
        }
      }
      if (part.empty()) fail("empty key");
      parts.push_back(part);
      if (peek() != '.') return parts;
      ++pos_;
    }
  }

  json value() {
    const char c = peek();
    if (c == '"') return string();
    if (c == '[') return array();
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return false;
    }
    return number();
  }

 private:
  std::string string() {
    expect('"');
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char ch = s_[pos_++];
      if (ch == '\\') {
        if (pos_ >= s_.size()) fail("dangling escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': ch = '\n'; break;
          case 't': ch = '\t'; break;
          case '"': ch = '"'; break;
          case '\\': ch = '\\'; break;
          default: fail(std::string("unknown escape \\") + e);
        }
      }
      out += ch;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json array() {
    expect('[');
    json out = json::array();
    if (peek() == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      out.push_back(value());
      const char c = peek();
      ++pos_;
      if (c == ']') return out;
      if (c != ',') fail("expected ',' or ']' in array");
      if (peek() == ']') {
        ++pos_;
        return out;
      }
    }
  }

  json number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                s_[pos_] == '.' || s_[pos_] == '+' || s_[pos_] == '-' ||
                                s_[pos_] == '_')) {
      ++pos_;
    }
    std::string tok = s_.substr(start, pos_ - start);
    std::erase(tok, '_');
    if (tok.empty()) fail("expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos &&
                          tok.find_first_of("xX") == std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double d = std::stod(tok, &used);
        if (used == tok.size()) return d;
      } else if (tok[0] == '-') {
        const long long v = std::stoll(tok, &used, 0);
        if (used == tok.size()) return v;
      } else {
        const unsigned long long v = std::stoull(tok, &used, 0);
        if (used == tok.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail("cannot parse value '" + tok + "'");
  }

  const std::string& s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

int bracket_balance(const std::string& s) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && in_string) {
      ++i;
    } else if (s[i] == '"') {
      in_string = !in_string;
    } else if (!in_string && s[i] == '[') {
      ++depth;
    } else if (!in_string && s[i] == ']') {
      --depth;
    }
  }
  return depth;
}

json* descend(json& root, const std::vector<std::string>& path, std::size_t line) {
  json* node = &root;
  for (const auto& p : path) {
    json& child = (*node)[p];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) {
      throw ConfigError("config line " + std::to_string(line) + ": '" + p + "' is not a table");
    }
    node = &child;
  }
  return node;
}

}  // namespace

json parse_toml(const std::string& text) {
  json root = json::object();
  json* table = &root;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = strip_comment(raw);
    const std::size_t first_line = line_no;
    // Arrays may continue over several lines.
    while (bracket_balance(line) > 0 && std::getline(in, raw)) {
      ++line_no;
      line += "\n" + strip_comment(raw);
    }
    TomlLine p(line, first_line);
    if (p.done()) continue;
    if (p.peek() == '[') {
      p.expect('[');
      const auto path = p.key();
      p.expect(']');
      if (!p.done()) p.fail("trailing characters after table header");
      table = descend(root, path, first_line);
      continue;
    }
    auto key = p.key();
    p.expect('=');
    json v = p.value();
    if (!p.done()) p.fail("trailing characters after value");
    const std::string leaf = key.back();
    key.pop_back();
    json* target = descend(*table, key, first_line);
    if (target->contains(leaf)) p.fail("duplicate key '" + leaf + "'");
    (*target)[leaf] = std::move(v);
  }
  return root;
}

json parse_text(const std::string& text) {
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (c == '{') {
      try {
        return json::parse(text);
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
      }
    }
    break;
  }
  return parse_toml(text);
}

json read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

// ---------------------------------------------------------------------------
// RunConfig

namespace {

/// Reads typed fields out of one table, remembering which keys were used so
/// that leftovers can be reported as unknown.
class Table {
 public:
  Table(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError("field '" + prefix_ + "': expected a table");
  }

  std::string name(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("field '" + name(key) + "': " + what);
  }
  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  double real(const std::string& key, double def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "must be finite");
    return d;
  }
  std::uint64_t count(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
      fail(key, "must be nonnegative");
    }
    fail(key, "expected a nonnegative integer");
  }
  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    return v.get<bool>();
  }
  std::string text(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }
  const json* sub(const std::string& key) {
    if (!has(key)) return nullptr;
    return &j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) fail(it.key(), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> used_;
};

template <typename E>
E pick(Table& t, const std::string& key, E def,
       const std::vector<std::pair<std::string, E>>& options) {
  if (!t.has(key)) return def;
  const std::string v = t.text(key, "");
  for (const auto& [name, e] : options) {
    if (name == v) return e;
  }
  std::string allowed;
  for (const auto& o : options) allowed += (allowed.empty() ? "" : ", ") + o.first;
  t.fail(key, "expected one of " + allowed);
}

const std::vector<std::pair<std::string, actor::Schedule>> kSchedules{
    {"inverse_t", actor::Schedule::InverseT}, {"constant", actor::Schedule::Constant}};
const std::vector<std::pair<std::string, actor::Signal>> kSignals{
    {"td_error", actor::Signal::TdError}, {"q_value", actor::Signal::QValue}};
const std::vector<std::pair<std::string, actor::TdSign>> kSigns{
    {"conventional", actor::TdSign::Conventional}, {"verbatim", actor::TdSign::Verbatim}};

template <typename E>
std::string name_of(E e, const std::vector<std::pair<std::string, E>>& options) {
  for (const auto& [name, v] : options) {
    if (v == e) return name;
  }
  return "?";
}

}  // namespace

RunConfig from_json(const json& j) {
  RunConfig cfg;
  Table top(j, "");
  cfg.gamma = top.real("gamma", cfg.gamma);
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) top.fail("gamma", "must lie in (0, 1)");
  if (const json* s = top.sub("seeds")) {
    cfg.seeds.clear();
    if (s->is_number_unsigned()) {
      cfg.seeds.push_back(s->get<std::uint64_t>());
    } else if (s->is_array() && !s->empty()) {
      for (const auto& v : *s) {
        if (!v.is_number_unsigned()) top.fail("seeds", "expected nonnegative integers");
        cfg.seeds.push_back(v.get<std::uint64_t>());
      }
    } else {
      top.fail("seeds", "expected a nonempty list of nonnegative integers");
    }
  }
  cfg.out = top.text("out", cfg.out);

  if (const json* e = top.sub("environment")) {
    Table t(*e, "environment");
    cfg.environment.kind = t.text("kind", "grid");
    if (cfg.environment.kind != "grid" && cfg.environment.kind != "tabular") {
      t.fail("kind", "expected grid or tabular");
    }
    auto& g = cfg.environment.grid;
    g.length = static_cast<std::int32_t>(t.count("length", 13));
    g.width = static_cast<std::int32_t>(t.count("width", 5));
    g.n_agents = t.count("agents", 2);
    if (g.length < 1) t.fail("length", "must be at least 1");
    if (g.width < 1) t.fail("width", "must be at least 1");
    if (g.n_agents < 1) t.fail("agents", "must be at least 1");
    if (static_cast<std::size_t>(g.length * g.width) < g.n_agents) {
      t.fail("agents", "more landmarks than board cells");
    }
    if (t.has("landmark_seed")) cfg.environment.landmark_seed = t.count("landmark_seed", 0);
    if (const json* lm = t.sub("landmarks")) {
      if (!lm->is_array()) t.fail("landmarks", "expected a list of [x, y] pairs");
      for (const auto& c : *lm) {
        if (!c.is_array() || c.size() != 2 || !c[0].is_number_integer() ||
            !c[1].is_number_integer()) {
          t.fail("landmarks", "expected a list of [x, y] pairs");
        }
        const env::Cell cell{c[0].get<std::int32_t>(), c[1].get<std::int32_t>()};
        if (cell.x < 0 || cell.x >= g.length || cell.y < 0 || cell.y >= g.width) {
          t.fail("landmarks", "landmark outside the board");
        }
        g.landmarks.push_back(cell);
      }
      if (g.landmarks.size() != g.n_agents) t.fail("landmarks", "need one landmark per agent");
    }
    cfg.environment.episode_len = t.count("episode_len", 10);
    if (cfg.environment.episode_len < 1) t.fail("episode_len", "must be at least 1");
    g.reward_shift = t.flag("reward_shift", true);
    g.reward_scale = t.real("reward_scale", 1.0);
    if (!(g.reward_scale > 0.0)) t.fail("reward_scale", "must be positive");
    cfg.environment.tabular_path = t.text("tabular", "");
    if (cfg.environment.kind == "tabular" && cfg.environment.tabular_path.empty()) {
      t.fail("tabular", "required when kind = \"tabular\"");
    }
    t.finish();
  }

  if (const json* n = top.sub("network")) {
    Table t(*n, "network");
    cfg.width = t.count("m", cfg.width);
    cfg.depth = t.count("D", cfg.depth);
    if (cfg.width < 1) t.fail("m", "must be at least 1");
    if (cfg.depth < 1) t.fail("D", "must be at least 1");
    cfg.critic.radius = t.real("B", cfg.critic.radius);
    if (!(cfg.critic.radius > 0.0)) t.fail("B", "must be positive");
    cfg.critic.step = t.real("beta", cfg.critic.step);
    if (cfg.critic.step < 0.0) t.fail("beta", "must be nonnegative (0 selects 1/sqrt(K))");
    t.finish();
  }

  if (const json* a = top.sub("actor")) {
    Table t(*a, "actor");
    cfg.actor.rounds = t.count("T", cfg.actor.rounds);
    cfg.actor.batch = t.count("M", cfg.actor.batch);
    if (cfg.actor.rounds < 1) t.fail("T", "must be at least 1");
    if (cfg.actor.batch < 1) t.fail("M", "must be at least 1");
    cfg.actor.alpha = t.real("alpha", cfg.actor.alpha);
    if (!(cfg.actor.alpha > 0.0)) t.fail("alpha", "must be positive");
    cfg.actor.schedule = pick(t, "schedule", cfg.actor.schedule, kSchedules);
    cfg.actor.signal = pick(t, "signal", cfg.actor.signal, kSignals);
    cfg.actor.td_sign = pick(t, "td_sign", cfg.actor.td_sign, kSigns);
    cfg.actor.train_all = t.flag("train_all", cfg.actor.train_all);
    cfg.actor.cap_score = t.flag("cap_score", cfg.actor.cap_score);
    t.finish();
  }

  if (const json* c = top.sub("consensus")) {
    Table t(*c, "consensus");
    cfg.topology = t.text("topology", cfg.topology);
    cfg.actor.gossip_rounds = t.count("t_gossip", cfg.actor.gossip_rounds);
    cfg.matrix_path = t.text("matrix", "");
    t.finish();
  }

  if (const json* c = top.sub("critic")) {
    Table t(*c, "critic");
    cfg.critic.iterations = t.count("K", cfg.critic.iterations);
    if (cfg.critic.iterations < 1) t.fail("K", "must be at least 1");
    cfg.critic.verbatim_offbyone = t.flag("verbatim_offbyone", false);
    cfg.critic_warm_start = t.flag("warm_start", false);
    t.finish();
  }
  top.finish();
  return cfg;
}

RunConfig load(const std::filesystem::path& path) {
  RunConfig cfg = from_json(read_file(path));
  cfg.base_dir = path.parent_path();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json env = {{"kind", cfg.environment.kind},
              {"length", cfg.environment.grid.length},
              {"width", cfg.environment.grid.width},
              {"agents", cfg.environment.grid.n_agents},
              {"episode_len", cfg.environment.episode_len},
              {"reward_shift", cfg.environment.grid.reward_shift},
              {"reward_scale", cfg.environment.grid.reward_scale}};
  if (cfg.environment.landmark_seed) env["landmark_seed"] = *cfg.environment.landmark_seed;
  if (!cfg.environment.grid.landmarks.empty()) {
    json lm = json::array();
    for (const auto& c : cfg.environment.grid.landmarks) lm.push_back({c.x, c.y});
    env["landmarks"] = lm;
  }
  if (!cfg.environment.tabular_path.empty()) env["tabular"] = cfg.environment.tabular_path;

  json consensus = {{"topology", cfg.topology}, {"t_gossip", cfg.actor.gossip_rounds}};
  if (!cfg.matrix_path.empty()) consensus["matrix"] = cfg.matrix_path;

  return {
      {"gamma", cfg.gamma},
      {"environment", env},
      {"network",
       {{"m", cfg.width}, {"D", cfg.depth}, {"B", cfg.critic.radius}, {"beta", cfg.critic.step}}},
      {"actor",
       {{"T", cfg.actor.rounds},
        {"M", cfg.actor.batch},
        {"alpha", cfg.actor.alpha},
        {"schedule", name_of(cfg.actor.schedule, kSchedules)},
        {"signal", name_of(cfg.actor.signal, kSignals)},
        {"td_sign", name_of(cfg.actor.td_sign, kSigns)},
        {"train_all", cfg.actor.train_all},
        {"cap_score", cfg.actor.cap_score}}},
      {"consensus", consensus},
      {"critic",
       {{"K", cfg.critic.iterations},
        {"verbatim_offbyone", cfg.critic.verbatim_offbyone},
        {"warm_start", cfg.critic_warm_start}}},
  };
}

std::string config_hash(const RunConfig& cfg) {
  // nlohmann::json objects are key-sorted, so the dump is canonical.
  const std::string dump = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_scale(RunConfig& cfg, bool paper_scale) {
  if (paper_scale) cfg.actor.rounds = kPaperRounds;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

const std::vector<std::pair<std::string, Axis>> kAxes{
    {"t_gossip", Axis::TGossip}, {"m", Axis::Width},  {"D", Axis::Depth},
    {"N", Axis::Agents},         {"K_M", Axis::KM},   {"signal", Axis::Signal}};

}  // namespace

SweepSpec sweep_from_json(const json& j, const std::filesystem::path& base_dir) {
  SweepSpec spec;
  Table top(j, "");
  const std::string base = top.text("base", "");
  if (base.empty()) top.fail("base", "required (path of the base config)");
  spec.base = load(base_dir / base);
  const json* sw = top.sub("sweep");
  if (!sw) top.fail("sweep", "required table");
  Table t(*sw, "sweep");
  spec.axis_name = t.text("axis", "");
  bool found = false;
  for (const auto& [name, axis] : kAxes) {
    if (name == spec.axis_name) {
      spec.axis = axis;
      found = true;
    }
  }
  if (!found) t.fail("axis", "expected one of t_gossip, m, D, N, K_M, signal");
  const json* values = t.sub("values");
  if (!values || !values->is_array() || values->empty()) t.fail("values", "expected a nonempty list");
  spec.values.assign(values->begin(), values->end());
  spec.repetitions = t.count("repetitions", kDeskRepetitions);
  if (spec.repetitions < 1) t.fail("repetitions", "must be at least 1");
  spec.name = t.text("name", spec.axis_name);
  t.finish();
  top.finish();
  // Every cell must validate before anything runs.
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    try {
      sweep_cell(spec, i);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("field 'sweep.values': ") + e.what());
    }
  }
  return spec;
}

SweepSpec load_sweep(const std::filesystem::path& path) {
  return sweep_from_json(read_file(path), path.parent_path());
}

RunConfig sweep_cell(const SweepSpec& spec, std::size_t index) {
  RunConfig cfg = spec.base;
  const json& v = spec.values.at(index);
  auto nonneg = [](const json& x) {
    return x.is_number_integer() && x.get<std::int64_t>() >= 0;
  };
  auto positive = [&](const json& x) {
    if (!nonneg(x) || x.get<std::int64_t>() == 0) {
      throw ConfigError("axis value " + x.dump() + " must be a positive integer");
    }
    return static_cast<std::size_t>(x.get<std::int64_t>());
  };
  switch (spec.axis) {
    case Axis::TGossip:
      if (!nonneg(v)) throw ConfigError("t_gossip value must be a nonnegative integer");
      cfg.actor.gossip_rounds = static_cast<std::size_t>(v.get<std::int64_t>());
      break;
    case Axis::Width: cfg.width = positive(v); break;
    case Axis::Depth: cfg.depth = positive(v); break;
    case Axis::Agents:
      cfg.environment.grid.n_agents = positive(v);
      cfg.environment.grid.landmarks.clear();
      break;
    case Axis::KM:
      if (!v.is_array() || v.size() != 2) throw ConfigError("K_M value must be a [K, M] pair");
      cfg.critic.iterations = positive(v[0]);
      cfg.actor.batch = positive(v[1]);
      break;
    case Axis::Signal: {
      const std::string s = v.is_string() ? v.get<std::string>() : "";
      if (s == "td_error" || s == "td") {
        cfg.actor.signal = actor::Signal::TdError;
      } else if (s == "q_value" || s == "q") {
        cfg.actor.signal = actor::Signal::QValue;
      } else {
        throw ConfigError("signal value must be td_error or q_value");
      }
      break;
    }
  }
  return cfg;
}

std::string axis_label(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_array()) {
    std::string out;
    for (const auto& v : value) out += (out.empty() ? "" : "_") + axis_label(v);
    return out;
  }
  return value.dump();
}

namespace {

void diff_into(const json& a, const json& b, const std::string& prefix,
               std::vector<std::string>& out) {
  if (a.is_object() && b.is_object()) {
    std::set<std::string> keys;
    for (auto it = a.begin(); it != a.end(); ++it) keys.insert(it.key());
    for (auto it = b.begin(); it != b.end(); ++it) keys.insert(it.key());
    for (const auto& k : keys) {
      const std::string path = prefix.empty() ? k : prefix + "." + k;
      if (!a.contains(k) || !b.contains(k)) {
        out.push_back(path);
      } else {
        diff_into(a.at(k), b.at(k), path, out);
      }
    }
  } else if (a != b) {
    out.push_back(prefix);
  }
}

}  // namespace

std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> out;
  diff_into(to_json(a), to_json(b), "", out);
  return out;
}

}  // namespace decac::config
