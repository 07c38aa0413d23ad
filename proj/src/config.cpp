#include "sgs/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sgs {

namespace {

enum class KeyType { kInt, kFloat, kBool, kString, kIntList };

struct KeySpec {
  const char* name;
  KeyType type;
  const char* def;
  const char* doc;
};

// Every config-exposed decision lives here; this table also generates the
// reference document.
const KeySpec kSchema[] = {
    {"model.backbone", KeyType::kString, "dcitn",
     "synthesis backbone of the generator: dcitn | unet"},
    {"model.style_width", KeyType::kInt, "512",
     "width of the style representation produced by the mapping network"},
    {"model.mapping_channels", KeyType::kIntList, "16,32,64,128",
     "channel progression of the four mapping-network blocks"},
    {"model.noise_enabled", KeyType::kBool, "true",
     "inject learned-scale noise after each backbone conv (train mode only)"},
    {"model.adain_enabled", KeyType::kBool, "true",
     "modulate each backbone conv with AdaIN style factors"},
    {"model.noise_sigma", KeyType::kFloat, "0.01",
     "standard deviation of the injected Gaussian noise field"},
    {"model.leaky_slope", KeyType::kFloat, "0.2",
     "negative slope of every LeakyReLU"},
    {"model.dcitn_growth", KeyType::kInt, "8",
     "growth rate k of the densely connected backbone"},
    {"model.dcitn_layers", KeyType::kInt, "4",
     "number of dense layers in the backbone"},
    {"model.dcitn_stem_channels", KeyType::kInt, "16",
     "output channels of the backbone stem conv"},
    {"model.unet_channels", KeyType::kIntList, "16,32,64",
     "encoder channel progression of the 3-level U-net"},
    {"model.critic_channels", KeyType::kIntList, "32,64,128,256",
     "channel progression of the critic's strided conv stages"},
    {"model.rois", KeyType::kInt, "4",
     "number of ROI channels in masks and the segmentation network"},
    {"loss.lambda1", KeyType::kFloat, "100",
     "weight of the L1 content loss"},
    {"loss.lambda2", KeyType::kFloat, "1",
     "weight of the segmentation guidance loss"},
    {"loss.clip_c", KeyType::kFloat, "0.01",
     "critic weight clipping bound [-c, c]"},
    {"loss.dice_eps", KeyType::kFloat, "1e-5",
     "smoothing epsilon in the soft dice denominator"},
    {"train.alpha", KeyType::kFloat, "1e-4", "RMSProp learning rate"},
    {"train.rho", KeyType::kFloat, "0.99",
     "RMSProp squared-gradient decay"},
    {"train.rms_floor", KeyType::kFloat, "1e-8",
     "RMSProp denominator floor"},
    {"train.batch_size", KeyType::kInt, "2", "training batch size"},
    {"train.n_critic", KeyType::kInt, "1",
     "critic updates per generator update"},
    {"train.schedule", KeyType::kIntList, "1200,100,300,100",
     "epoch budget of the four alternate phases (GAN, S, GAN, S)"},
    {"train.scale", KeyType::kInt, "1",
     "divisor applied to every phase budget for desk-scale runs"},
    {"train.seed", KeyType::kInt, "1234", "master seed"},
    {"train.sg_enabled", KeyType::kBool, "true",
     "enable segmentation guidance (lambda2 active in phase 3)"},
    {"train.val_cases", KeyType::kInt, "4",
     "test-split cases used for the per-epoch psnr_val log column"},
    {"train.threads", KeyType::kInt, "0",
     "worker threads for tensor kernels (0 = hardware count)"},
    {"phantom.size", KeyType::kInt, "64",
     "phantom grid extent per axis (must be divisible by 16)"},
    {"phantom.count", KeyType::kInt, "50", "number of generated cases"},
    {"phantom.drf", KeyType::kInt, "6", "dose reduction factor"},
    {"phantom.rescale", KeyType::kBool, "true",
     "multiply thinned counts by drf so intensity matches full dose"},
    {"phantom.train_fraction", KeyType::kFloat, "0.8",
     "fraction of cases in the train split"},
    {"phantom.background", KeyType::kFloat, "20",
     "background activity in counts per voxel"},
    {"phantom.render_scale", KeyType::kInt, "1",
     "supersampling factor: render at scale*size, then resize down"},
    {"phantom.samples_per_case", KeyType::kInt, "1",
     "low-dose draws per phantom (both stay in one split)"},
    {"eval.harness_epochs", KeyType::kInt, "30",
     "training epochs of the frozen evaluation U-net"},
    {"eval.threshold", KeyType::kFloat, "0.5",
     "probability threshold for mask binarization"},
};

const KeySpec* find_spec(const std::string& canonical) {
  for (const auto& s : kSchema) {
    if (canonical == s.name) return &s;
  }
  return nullptr;
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "off" || v == "no") {
    out = false;
    return true;
  }
  return false;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void check_typed(const KeySpec& spec, const std::string& value) {
  switch (spec.type) {
    case KeyType::kInt: {
      char* end = nullptr;
      (void)std::strtoll(value.c_str(), &end, 10);
      if (end == value.c_str() || *end != '\0') {
        throw ConfigError("key '" + std::string(spec.name) +
                          "' expects an integer, got '" + value + "'");
      }
      break;
    }
    case KeyType::kFloat: {
      char* end = nullptr;
      (void)std::strtod(value.c_str(), &end);
      if (end == value.c_str() || *end != '\0') {
        throw ConfigError("key '" + std::string(spec.name) +
                          "' expects a number, got '" + value + "'");
      }
      break;
    }
    case KeyType::kBool: {
      bool b;
      if (!parse_bool(value, b)) {
        throw ConfigError("key '" + std::string(spec.name) +
                          "' expects a boolean, got '" + value + "'");
      }
      break;
    }
    case KeyType::kString:
      break;
    case KeyType::kIntList: {
      std::stringstream ss(value);
      std::string item;
      int n = 0;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        char* end = nullptr;
        (void)std::strtoll(item.c_str(), &end, 10);
        if (item.empty() || end == item.c_str() || *end != '\0') {
          throw ConfigError("key '" + std::string(spec.name) +
                            "' expects a comma-separated integer list, got '" +
                            value + "'");
        }
        ++n;
      }
      if (n == 0) {
        throw ConfigError("key '" + std::string(spec.name) +
                          "' expects a non-empty list");
      }
      break;
    }
  }
}

}  // namespace

Config::Config() {
  for (const auto& s : kSchema) values_[s.name] = s.def;
}

Config Config::from_file(const std::string& path) {
  Config c;
  c.load_file(path);
  return c;
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!section.empty() && key.find('.') == std::string::npos) {
      key = section + "." + key;
    }
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string Config::canonical_key(const std::string& key) const {
  if (find_spec(key) != nullptr) return key;
  if (key.find('.') == std::string::npos) {
    // unique short-name match
    std::string match;
    for (const auto& s : kSchema) {
      const std::string name(s.name);
      const std::size_t dot = name.rfind('.');
      if (name.substr(dot + 1) == key) {
        if (!match.empty()) {
          throw ConfigError("ambiguous key '" + key + "' (matches " + match +
                            " and " + name + ")");
        }
        match = name;
      }
    }
    if (!match.empty()) return match;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void Config::set(const std::string& key, const std::string& value) {
  const std::string canon = canonical_key(key);
  const KeySpec* spec = find_spec(canon);
  check_typed(*spec, value);
  values_[canon] = value;
}

std::string Config::get_raw(const std::string& key) const {
  return values_.at(canonical_key(key));
}

std::int64_t Config::get_int(const std::string& key) const {
  return std::strtoll(get_raw(key).c_str(), nullptr, 10);
}

double Config::get_double(const std::string& key) const {
  return std::strtod(get_raw(key).c_str(), nullptr);
}

bool Config::get_bool(const std::string& key) const {
  bool b = false;
  parse_bool(get_raw(key), b);
  return b;
}

std::string Config::get_string(const std::string& key) const {
  return get_raw(key);
}

std::vector<std::int64_t> Config::get_int_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  std::stringstream ss(get_raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(std::strtoll(trim(item).c_str(), nullptr, 10));
  }
  return out;
}

void Config::validate() const {
  const std::string backbone = get_string("model.backbone");
  if (backbone != "dcitn" && backbone != "unet") {
    throw ConfigError("model.backbone must be dcitn or unet, got '" +
                      backbone + "'");
  }
  if (get_double("loss.lambda1") < 0) throw ConfigError("loss.lambda1 must be >= 0");
  if (get_double("loss.lambda2") < 0) throw ConfigError("loss.lambda2 must be >= 0");
  if (get_double("loss.clip_c") <= 0) throw ConfigError("loss.clip_c must be > 0");
  if (get_double("loss.dice_eps") <= 0) throw ConfigError("loss.dice_eps must be > 0");
  if (get_double("train.alpha") <= 0) throw ConfigError("train.alpha must be > 0");
  if (get_double("model.noise_sigma") <= 0) {
    throw ConfigError("model.noise_sigma must be > 0");
  }
  if (get_int("train.batch_size") < 1) throw ConfigError("train.batch_size must be >= 1");
  if (get_int("train.n_critic") < 1) throw ConfigError("train.n_critic must be >= 1");
  if (get_int("train.scale") < 1) throw ConfigError("train.scale must be >= 1");
  if (get_int_list("train.schedule").size() != 4) {
    throw ConfigError("train.schedule must list four phase budgets");
  }
  if (get_int("phantom.drf") < 1) throw ConfigError("phantom.drf must be >= 1");
  if (get_int("phantom.size") % 16 != 0 || get_int("phantom.size") <= 0) {
    throw ConfigError("phantom.size must be a positive multiple of 16");
  }
  const double tf = get_double("phantom.train_fraction");
  if (tf <= 0.0 || tf >= 1.0) {
    throw ConfigError("phantom.train_fraction must be in (0,1)");
  }
  if (get_int("phantom.render_scale") < 1) {
    throw ConfigError("phantom.render_scale must be >= 1");
  }
  if (get_int("phantom.samples_per_case") < 1) {
    throw ConfigError("phantom.samples_per_case must be >= 1");
  }
  if (get_int("model.rois") < 1) throw ConfigError("model.rois must be >= 1");
  if (get_int("model.style_width") < 1) {
    throw ConfigError("model.style_width must be >= 1");
  }
  const auto mc = get_int_list("model.mapping_channels");
  if (mc.size() != 4) {
    throw ConfigError("model.mapping_channels must list four entries");
  }
  for (std::size_t i = 1; i < mc.size(); ++i) {
    if (mc[i] != 2 * mc[i - 1]) {
      throw ConfigError("model.mapping_channels must double at each block");
    }
  }
  if (get_int_list("model.unet_channels").size() != 3) {
    throw ConfigError("model.unet_channels must list three entries");
  }
  const double slope = get_double("model.leaky_slope");
  if (slope < 0.0 || slope >= 1.0) {
    throw ConfigError("model.leaky_slope must be in [0,1)");
  }
  if (get_int("eval.harness_epochs") < 1) {
    throw ConfigError("eval.harness_epochs must be >= 1");
  }
  const double thr = get_double("eval.threshold");
  if (thr <= 0.0 || thr >= 1.0) throw ConfigError("eval.threshold must be in (0,1)");
}

std::string Config::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

std::string Config::digest() const {
  return to_hex(fnv1a64(serialize()));
}

std::string Config::reference() {
  std::ostringstream os;
  os << "# Configuration reference (key, default, description)\n";
  std::string section;
  for (const auto& s : kSchema) {
    const std::string name(s.name);
    const std::string sec = name.substr(0, name.find('.'));
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    os << name.substr(name.find('.') + 1) << " = " << s.def << "\n    # "
       << s.doc << "\n";
  }
  return os.str();
}

ModelConfig Config::model_config() const {
  ModelConfig m;
  m.backbone = get_string("model.backbone");
  m.noise_enabled = get_bool("model.noise_enabled");
  m.adain_enabled = get_bool("model.adain_enabled");
  m.style.style_width = get_int("model.style_width");
  m.style.mapping_channels = get_int_list("model.mapping_channels");
  m.style.noise_sigma = get_double("model.noise_sigma");
  m.style.leaky_slope = get_double("model.leaky_slope");
  m.dcitn_growth = get_int("model.dcitn_growth");
  m.dcitn_layers = get_int("model.dcitn_layers");
  m.dcitn_stem_channels = get_int("model.dcitn_stem_channels");
  m.unet_channels = get_int_list("model.unet_channels");
  m.critic_channels = get_int_list("model.critic_channels");
  m.rois = get_int("model.rois");
  return m;
}

LossWeights Config::loss_weights() const {
  LossWeights w;
  w.lambda1 = get_double("loss.lambda1");
  w.lambda2 = get_double("loss.lambda2");
  w.clip_c = get_double("loss.clip_c");
  w.validate();
  return w;
}

}  // namespace sgs
