#include "sovnet/config.hpp"

#include <fstream>
#include <sstream>

namespace sovnet {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (...) {
      throw ConfigError("bad integer list for key '" + key + "': " + v);
    }
  }
  return out;
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    return std::stoi(v);
  } catch (...) {
    throw ConfigError("bad integer for key '" + key + "': " + v);
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (...) {
    throw ConfigError("bad number for key '" + key + "': " + v);
  }
}

unsigned long long parse_ull(const std::string& v, const std::string& key) {
  try {
    return std::stoull(v);
  } catch (...) {
    throw ConfigError("bad integer for key '" + key + "': " + v);
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for key '" + key + "': " + v);
}

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

void set_model_key(ModelConfig& m, const std::string& key, const std::string& value) {
  if (key == "group") {
    if (value == "p4") m.group = GroupKind::p4;
    else if (value == "p4m") m.group = GroupKind::p4m;
    else throw ConfigError("model.group must be p4 or p4m, got '" + value + "'");
  } else if (key == "in_channels") m.in_channels = parse_int(value, key);
  else if (key == "image_size") m.image_size = parse_int(value, key);
  else if (key == "stem_channels") m.stem_channels = parse_int(value, key);
  else if (key == "num_types") m.num_types = parse_int(value, key);
  else if (key == "pose_dim") m.pose_dim = parse_int(value, key);
  else if (key == "hidden_layers") m.hidden_layers = parse_int(value, key);
  else if (key == "strides") m.strides = parse_int_list(value, key);
  else if (key == "primary_stride") m.primary_stride = parse_int(value, key);
  else if (key == "classes") m.classes = parse_int(value, key);
  else if (key == "kernel") m.kernel = parse_int(value, key);
  else if (key == "decoder_hidden") m.decoder_hidden = parse_int_list(value, key);
  else throw ConfigError("unknown key 'model." + key + "'");
}

void set_training_key(TrainConfig& t, const std::string& key, const std::string& value) {
  if (key == "epochs") t.epochs = parse_int(value, key);
  else if (key == "batch_size") t.batch_size = parse_int(value, key);
  else if (key == "lr") t.lr = parse_double(value, key);
  else if (key == "lr_decay") t.lr_decay = parse_double(value, key);
  else if (key == "recon_weight") t.recon_weight = parse_double(value, key);
  else if (key == "reconstruction") t.reconstruction = parse_bool(value, key);
  else if (key == "seed") t.seed = parse_ull(value, key);
  else if (key == "target_accuracy") t.target_accuracy = parse_double(value, key);
  else throw ConfigError("unknown key 'training." + key + "'");
}

void set_data_key(DataConfig& d, const std::string& key, const std::string& value) {
  if (key == "dataset") {
    if (value != "shapes" && value != "idx") throw ConfigError("data.dataset must be shapes or idx");
    d.dataset = value;
  } else if (key == "train_count") d.train_count = parse_int(value, key);
  else if (key == "test_count") d.test_count = parse_int(value, key);
  else if (key == "image_size") d.image_size = parse_int(value, key);
  else if (key == "pad_to") d.pad_to = parse_int(value, key);
  else if (key == "seed") d.seed = parse_ull(value, key);
  else if (key == "train_images") d.train_images = value;
  else if (key == "train_labels") d.train_labels = value;
  else if (key == "test_images") d.test_images = value;
  else if (key == "test_labels") d.test_labels = value;
  else throw ConfigError("unknown key 'data." + key + "'");
}

}  // namespace

void ModelConfig::validate() const {
  if (in_channels < 1 || image_size < 3 || stem_channels < 1 || num_types < 1 || pose_dim < 1 ||
      classes < 2 || hidden_layers < 1)
    throw ConfigError("model config: extents must be positive (and classes >= 2)");
  if (static_cast<int>(strides.size()) != hidden_layers)
    throw ConfigError("model config: strides must list one stride per hidden layer");
  for (int s : strides)
    if (s < 1) throw ConfigError("model config: strides must be >= 1");
  if (primary_stride < 1) throw ConfigError("model config: primary_stride must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("model config: kernel must be odd");
  if (decoder_hidden.size() != 2) throw ConfigError("model config: decoder_hidden needs two extents");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "group=" << (group == GroupKind::p4 ? "p4" : "p4m") << "\n"
     << "in_channels=" << in_channels << "\n"
     << "image_size=" << image_size << "\n"
     << "stem_channels=" << stem_channels << "\n"
     << "num_types=" << num_types << "\n"
     << "pose_dim=" << pose_dim << "\n"
     << "hidden_layers=" << hidden_layers << "\n"
     << "strides=" << join(strides) << "\n"
     << "primary_stride=" << primary_stride << "\n"
     << "classes=" << classes << "\n"
     << "kernel=" << kernel << "\n"
     << "decoder_hidden=" << join(decoder_hidden) << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig m;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad model config line: " + line);
    set_model_key(m, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  m.validate();
  return m;
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "training" && section != "data")
        throw ConfigError("unknown section '[" + section + "]' at line " + std::to_string(lineno));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key=value at line " + std::to_string(lineno) + ": " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("key '" + key + "' outside any section");
    cfg.set(section + "." + key, value);
  }
  cfg.model.validate();
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_text(os.str());
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("expected section.key, got '" + dotted_key + "'");
  std::string section = dotted_key.substr(0, dot);
  std::string key = dotted_key.substr(dot + 1);
  if (section == "model") set_model_key(model, key, value);
  else if (section == "training") set_training_key(training, key, value);
  else if (section == "data") set_data_key(data, key, value);
  else throw ConfigError("unknown section '" + section + "'");
}

}  // namespace sovnet
