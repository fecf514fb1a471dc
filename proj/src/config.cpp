#include "spkseq/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "spkseq/error.hpp"

namespace spkseq {

std::string to_string(Task t) {
  switch (t) {
    case Task::smnist: return "smnist";
    case Task::scifar: return "scifar";
    case Task::synth: return "synth";
  }
  return "?";
}

Task parse_task(std::string_view s) {
  std::string lower(s);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "smnist") return Task::smnist;
  if (lower == "scifar") return Task::scifar;
  if (lower == "synth") return Task::synth;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

[[noreturn]] void type_error(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("key '" + key + "': expected " + expected + ", got '" + value + "'");
}

double as_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) type_error(key, v, "a real number");
  return out;
}

std::uint64_t as_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) type_error(key, v, "a non-negative integer");
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  type_error(key, v, "a boolean");
}

template <class F>
auto as_enum(const std::string& key, const std::string& v, F parse) {
  try {
    return parse(v);
  } catch (const ConfigError&) {
    type_error(key, v, "a known option");
  }
}

// Returns false when the key is not a model key.
bool apply_model_key(net::ModelConfig& m, const std::string& k, const std::string& v) {
  auto& b = m.block;
  if (k == "layers") m.n_layers = as_uint(k, v);
  else if (k == "seq_len") m.seq_len = as_uint(k, v);
  else if (k == "n_classes") m.n_classes = as_uint(k, v);
  else if (k == "features") b.features = as_uint(k, v);
  else if (k == "ssm_state") b.ssm_state = static_cast<int>(as_uint(k, v));
  else if (k == "init") {
    if (v == "lin") b.init = ssm::InitScheme::lin;
    else if (v == "inv") b.init = ssm::InitScheme::inv;
    else type_error(k, v, "lin or inv");
  } else if (k == "activation") b.activation.kind = as_enum(k, v, parse_activation_kind);
  else if (k == "surrogate") b.activation.surrogate = as_enum(k, v, parse_surrogate);
  else if (k == "alpha") b.activation.alpha = as_real(k, v);
  else if (k == "theta") b.activation.theta = as_real(k, v);
  else if (k == "mixer") b.mixer = as_enum(k, v, net::parse_mixer);
  else if (k == "norm") b.norm = as_enum(k, v, net::parse_norm);
  else if (k == "pre_norm") b.pre_norm = as_bool(k, v);
  else if (k == "dropout") b.dropout = as_real(k, v);
  else if (k == "bidirectional") b.bidirectional = as_bool(k, v);
  else if (k == "residual") b.residual = as_enum(k, v, net::parse_residual);
  else if (k == "gsu_alpha") b.gsu_alpha = as_real(k, v);
  else if (k == "delta_min") b.delta.min = as_real(k, v);
  else if (k == "delta_max") b.delta.max = as_real(k, v);
  else return false;
  return true;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + std::string(line) + "'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    kv[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

void TrainConfig::validate() const {
  model.validate();
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(ssm_lr >= 0.0)) throw ConfigError("ssm_lr must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (task == Task::synth && model.seq_len < 2) throw ConfigError("synth task needs seq_len >= 2");
}

TrainConfig parse_config(std::string_view text,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  KeyValues kv = parse_key_values(text);
  for (const auto& [k, v] : overrides) kv[k] = v;
  for (const char* required : {"lr", "epochs"}) {
    if (!kv.count(required)) throw ConfigError(std::string("missing required key '") + required + "'");
  }

  TrainConfig cfg;
  if (auto it = kv.find("task"); it != kv.end()) cfg.task = as_enum("task", it->second, parse_task);
  switch (cfg.task) {
    case Task::smnist: cfg.model.seq_len = 784; cfg.model.n_classes = 10; break;
    case Task::scifar: cfg.model.seq_len = 1024; cfg.model.n_classes = 10; break;
    case Task::synth: cfg.model.seq_len = 1024; cfg.model.n_classes = 2; break;
  }
  const auto fixed_len = cfg.model.seq_len;
  const auto fixed_classes = cfg.model.n_classes;

  for (const auto& [k, v] : kv) {
    if (k == "task") continue;
    if (apply_model_key(cfg.model, k, v)) continue;
    if (k == "lr") cfg.lr = as_real(k, v);
    else if (k == "ssm_lr") cfg.ssm_lr = as_real(k, v);
    else if (k == "weight_decay") cfg.weight_decay = as_real(k, v);
    else if (k == "batch_size") cfg.batch_size = as_uint(k, v);
    else if (k == "epochs") cfg.epochs = as_uint(k, v);
    else if (k == "seed") cfg.seed = as_uint(k, v);
    else if (k == "out") cfg.out_dir = v;
    else if (k == "data") cfg.data_dir = v;
    else if (k == "train_limit") cfg.train_limit = as_uint(k, v);
    else if (k == "test_limit") cfg.test_limit = as_uint(k, v);
    else if (k == "synth_train") cfg.synth_train = as_uint(k, v);
    else if (k == "synth_test") cfg.synth_test = as_uint(k, v);
    else throw ConfigError("unknown key '" + k + "'");
  }
  if (cfg.task != Task::synth &&
      (cfg.model.seq_len != fixed_len || cfg.model.n_classes != fixed_classes)) {
    throw ConfigError("seq_len and n_classes are fixed by task " + to_string(cfg.task));
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << model.canonical();
  os << "batch_size=" << batch_size << '\n'
     << "data=" << data_dir << '\n'
     << "epochs=" << epochs << '\n'
     << "lr=" << lr << '\n'
     << "out=" << out_dir << '\n'
     << "seed=" << seed << '\n'
     << "ssm_lr=" << ssm_lr << '\n'
     << "synth_test=" << synth_test << '\n'
     << "synth_train=" << synth_train << '\n'
     << "task=" << to_string(task) << '\n'
     << "test_limit=" << test_limit << '\n'
     << "train_limit=" << train_limit << '\n'
     << "weight_decay=" << weight_decay << '\n';
  return os.str();
}

net::ModelConfig parse_model_config(std::string_view canonical_text) {
  net::ModelConfig m;
  for (const auto& [k, v] : parse_key_values(canonical_text)) {
    if (!apply_model_key(m, k, v)) throw FormatError("unexpected model key '" + k + "'");
  }
  m.validate();
  return m;
}

}  // namespace spkseq
