#include <fstream>
#include <set>
#include <sstream>

#include "re3/trainer.hpp"

namespace re3 {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');)
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
}

std::size_t to_size(const std::string& key, const std::string& value) {
  const double d = to_double(key, value);
  if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d)))
    throw ConfigError("'" + key + "' expects a nonnegative integer, got '" + value + "'");
  return static_cast<std::size_t>(d);
}

std::vector<SampleKind> to_kinds(const std::string& key, const std::string& value) {
  std::vector<SampleKind> out;
  for (const auto& name : split_list(value)) {
    auto k = kind_from_name(name == "summarization" ? "summarization-pair" : name);
    if (!k) throw ConfigError("'" + key + "' names unknown sample kind '" + name + "'");
    out.push_back(*k);
  }
  return out;
}

std::string kinds_to_text(const std::vector<SampleKind>& kinds) {
  std::string out;
  for (auto k : kinds) out += (out.empty() ? "" : ", ") + std::string(kind_name(k));
  return out;
}

// "E,P,L", "{E, P, L}" or "EPL" -> "EPL" in canonical order.
std::string to_trainable(const std::string& value) {
  std::set<char> letters;
  for (char c : value) {
    if (c == ',' || c == ' ' || c == '{' || c == '}') continue;
    if (c != 'E' && c != 'P' && c != 'L') throw ConfigError(std::string("unknown component '") + c + "' in trainable");
    letters.insert(c);
  }
  std::string out;
  for (char c : {'E', 'P', 'L'})
    if (letters.count(c)) out += c;
  return out;
}

void apply_stage_key(StageConfig& s, const std::string& key, const std::string& value) {
  if (key == "trainable") s.trainable = to_trainable(value);
  else if (key == "lambda") s.lambda = to_double(key, value);
  else if (key == "alphas") {
    const auto parts = split_list(value);
    if (parts.size() != 3) throw ConfigError("'alphas' expects three comma-separated values");
    for (std::size_t i = 0; i < 3; ++i) s.alphas[i] = to_double(key, parts[i]);
  } else if (key == "learning_rate") s.learning_rate = to_double(key, value);
  else if (key == "epochs") s.epochs = to_double(key, value);
  else if (key == "steps") s.steps = to_size(key, value);
  else if (key == "batch_size") s.batch_size = to_size(key, value);
  else if (key == "warmup_ratio") s.warmup_ratio = to_double(key, value);
  else if (key == "scheduler") s.scheduler = value;
  else if (key == "weight_decay") s.weight_decay = to_double(key, value);
  else if (key == "kinds") s.kinds = to_kinds(key, value);
  else if (key == "report_kinds") s.report_kinds = to_kinds(key, value);
  else if (key == "instruction_kinds") s.instruction_kinds = to_kinds(key, value);
  else throw ConfigError("unknown key '" + key + "' in [stage" + std::to_string(s.stage_id) + "]");
}

}  // namespace

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig config;
  std::map<std::string, std::string> model_keys;
  std::string section;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    auto line = trim(raw.substr(0, raw.find_first_of("#;")));
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "model" && section != "stage1" && section != "stage2" && section != "stage3")
        throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      if (section == "run") {
        if (key == "seed") config.seed = to_size(key, value);
        else if (key == "vocab_size") config.vocab_size = to_size(key, value);
        else throw ConfigError("unknown key '" + key + "' in [run]");
      } else if (section == "model") {
        static const std::set<std::string> known{"image_side", "patch_size", "vision_dim", "vision_layers",
                                                 "vision_heads", "projector_hidden", "lm_dim", "lm_layers",
                                                 "lm_heads", "max_context", "mlp_ratio", "init_std", "ln_eps",
                                                 "pixel_mean", "pixel_std"};
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in [model]");
        to_double(key, value);
        model_keys[key] = value;
      } else if (section.rfind("stage", 0) == 0) {
        apply_stage_key(config.stages[static_cast<std::size_t>(section[5] - '1')], key, value);
      } else {
        throw ConfigError("key '" + key + "' outside any section");
      }
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  config.model = ModelConfig::from_map(model_keys);
  for (const auto& s : config.stages) s.validate();
  return config;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingConfig("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "[run]\nseed = " << seed << "\nvocab_size = " << vocab_size << "\n\n[model]\n";
  for (const auto& [k, v] : model.to_map()) os << k << " = " << v << "\n";
  for (const auto& s : stages) {
    os << "\n[stage" << s.stage_id << "]\n";
    os << "trainable = " << s.trainable << "\n";
    os << "lambda = " << fmt(s.lambda) << "\n";
    os << "alphas = " << fmt(s.alphas[0]) << ", " << fmt(s.alphas[1]) << ", " << fmt(s.alphas[2]) << "\n";
    os << "learning_rate = " << fmt(s.learning_rate) << "\n";
    os << "epochs = " << fmt(s.epochs) << "\n";
    os << "steps = " << s.steps << "\n";
    os << "batch_size = " << s.batch_size << "\n";
    os << "warmup_ratio = " << fmt(s.warmup_ratio) << "\n";
    os << "scheduler = " << s.scheduler << "\n";
    os << "weight_decay = " << fmt(s.weight_decay) << "\n";
    if (!s.kinds.empty()) os << "kinds = " << kinds_to_text(s.kinds) << "\n";
    if (!s.report_kinds.empty()) os << "report_kinds = " << kinds_to_text(s.report_kinds) << "\n";
    if (!s.instruction_kinds.empty()) os << "instruction_kinds = " << kinds_to_text(s.instruction_kinds) << "\n";
  }
  return os.str();
}

}  // namespace re3
