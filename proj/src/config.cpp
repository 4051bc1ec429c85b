#include "vpflow/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vpflow {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("config: bad integer for '" + key + "': " + v);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for '" + key + "': " + v);
  }
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  model().validate();
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
}

ModelConfig TrainConfig::model() const {
  ModelConfig m;
  m.input_dim = input_dim;
  m.hidden = hidden;
  m.latent = latent;
  m.flow = flow;
  m.flow_k = flow_k;
  m.flow_t = flow_t;
  m.likelihood = likelihood;
  return m;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "flow") {
    auto k = parse_flow_kind(value);
    if (!k) throw ConfigError("config: unknown flow kind '" + value + "'");
    flow = *k;
  } else if (key == "k") {
    flow_k = parse_size(key, value);
  } else if (key == "t") {
    flow_t = parse_size(key, value);
  } else if (key == "latent") {
    latent = parse_size(key, value);
  } else if (key == "hidden") {
    hidden = parse_size(key, value);
  } else if (key == "input_dim") {
    input_dim = parse_size(key, value);
  } else if (key == "likelihood") {
    auto l = parse_likelihood(value);
    if (!l) throw ConfigError("config: unknown likelihood '" + value + "'");
    likelihood = *l;
  } else if (key == "batch") {
    batch = parse_size(key, value);
  } else if (key == "max_epochs") {
    max_epochs = parse_size(key, value);
  } else if (key == "warmup_epochs") {
    warmup_epochs = parse_size(key, value);
  } else if (key == "patience") {
    patience = parse_size(key, value);
  } else if (key == "lr") {
    lr = parse_double(key, value);
  } else if (key == "seed") {
    seed = parse_size(key, value);
  } else if (key == "train_path") {
    train_path = value;
  } else if (key == "valid_path") {
    valid_path = value;
  } else if (key == "test_path") {
    test_path = value;
  } else if (key == "out_dir") {
    out_dir = value;
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

void TrainConfig::apply_override(const std::string& key_eq_value) {
  std::size_t eq = key_eq_value.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override must look like key=value: " + key_eq_value);
  }
  set(trim(key_eq_value.substr(0, eq)), trim(key_eq_value.substr(eq + 1)));
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string TrainConfig::canonical_text() const {
  std::ostringstream os;
  os << "flow=" << to_string(flow) << '\n';
  os << "k=" << flow_k << '\n';
  os << "t=" << flow_t << '\n';
  os << "latent=" << latent << '\n';
  os << "hidden=" << hidden << '\n';
  os << "input_dim=" << input_dim << '\n';
  os << "likelihood=" << to_string(likelihood) << '\n';
  os << "batch=" << batch << '\n';
  os << "max_epochs=" << max_epochs << '\n';
  os << "warmup_epochs=" << warmup_epochs << '\n';
  os << "patience=" << patience << '\n';
  os << "lr=" << fmt_double(lr) << '\n';
  os << "seed=" << seed << '\n';
  os << "train_path=" << train_path << '\n';
  os << "valid_path=" << valid_path << '\n';
  os << "test_path=" << test_path << '\n';
  os << "out_dir=" << out_dir << '\n';
  return os.str();
}

}  // namespace vpflow
