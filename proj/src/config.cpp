#include "fsgnet/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "fsgnet/errors.hpp"

namespace fsg {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string squash(std::string s) {
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }),
          s.end());
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != static_cast<int>(d)) {
    throw ValidationError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto s = squash(v);
  if (s == "1" || s == "on" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "off" || s == "false" || s == "no") return false;
  throw ValidationError("config: '" + key + "' expects on/off, got '" + v + "'");
}

std::vector<std::string> split_on(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, delim);) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "a=1 b=2,3" -> {a: "1", b: "2,3"}; every item must be a known name.
std::map<std::string, std::string> items(const std::string& key, const std::string& value,
                                         const std::vector<std::string>& allowed) {
  std::map<std::string, std::string> out;
  std::stringstream ss(value);
  for (std::string tok; ss >> tok;) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ValidationError("config: '" + key + "' item '" + tok + "' must be name=value");
    }
    const auto name = tok.substr(0, eq);
    if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
      throw ValidationError("config: '" + key + "' has no item '" + name + "'");
    }
    out[name] = tok.substr(eq + 1);
  }
  return out;
}

std::vector<double> numbers(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_on(v, ',')) out.push_back(to_double(key, s));
  return out;
}

void require_fixed(const std::string& key, const std::string& value,
                   const std::vector<std::string>& accepted) {
  const auto s = squash(value);
  for (const auto& a : accepted) {
    if (s == squash(a)) return;
  }
  throw ValidationError("config: '" + key + "' only supports '" + accepted.front() +
                        "', got '" + value + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"base_lr", [](RunConfig& c, auto& k, auto& v) { c.train.base_lr = to_double(k, v); }},
      {"lr_scheduler",
       [](RunConfig&, auto& k, auto& v) {
         require_fixed(k, v, {"Linear warm-up, Cosine annealing", "warmup_cosine"});
       }},
      {"lr_scheduler_warm_up_epochs",
       [](RunConfig& c, auto& k, auto& v) { c.train.warmup_epochs = to_int(k, v); }},
      {"lr_scheduler_cycle_epochs",
       [](RunConfig& c, auto& k, auto& v) { c.train.cycle_epochs = to_int(k, v); }},
      {"lr_scheduler_eta_min",
       [](RunConfig& c, auto& k, auto& v) { c.train.eta_min = to_double(k, v); }},
      {"early_stop_epochs",
       [](RunConfig& c, auto& k, auto& v) { c.train.early_stop_epochs = to_int(k, v); }},
      {"early_stop_metric",
       [](RunConfig&, auto& k, auto& v) { require_fixed(k, v, {"F1 score", "F1"}); }},
      {"optimizer", [](RunConfig&, auto& k, auto& v) { require_fixed(k, v, {"AdamW"}); }},
      {"optimizer_momentum",
       [](RunConfig& c, auto& k, auto& v) {
         const auto b = numbers(k, v);
         if (b.size() != 2) throw ValidationError("config: '" + k + "' expects beta1, beta2");
         c.train.beta1 = b[0];
         c.train.beta2 = b[1];
       }},
      {"weight_decay",
       [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = to_double(k, v); }},
      {"criterion",
       [](RunConfig&, auto& k, auto& v) { require_fixed(k, v, {"Dice + BCE", "BCE + Dice"}); }},
      {"binary_threshold",
       [](RunConfig& c, auto& k, auto& v) { c.train.threshold = to_double(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = to_int(k, v); }},
      {"center_padded_shape",
       [](RunConfig& c, auto& k, auto& v) {
         for (const auto& [name, side] : items(k, v, {"D", "S", "C", "H"})) {
           c.train.padded_shape[data::parse_dataset(name)] = to_int(k, side);
         }
       }},
      {"random_crop",
       [](RunConfig& c, auto& k, auto& v) { c.train.augmentation.crop = to_int(k, v); }},
      {"random_blur",
       [](RunConfig& c, auto& k, auto& v) {
         auto& a = c.train.augmentation;
         for (const auto& [n, x] : items(k, v, {"k", "sigma", "prob"})) {
           if (n == "k") {
             a.blur_kernels.clear();
             for (double d : numbers(k, x)) a.blur_kernels.push_back(static_cast<int>(d));
           } else if (n == "sigma") {
             const auto s = numbers(k, x);
             if (s.size() != 2) throw ValidationError("config: '" + k + "' sigma expects min,max");
             a.blur_sigma_min = s[0];
             a.blur_sigma_max = s[1];
           } else {
             a.blur_prob = to_double(k, x);
           }
         }
       }},
      {"random_jitter",
       [](RunConfig& c, auto& k, auto& v) {
         auto& a = c.train.augmentation;
         for (const auto& [n, x] : items(k, v, {"b", "c", "s", "h", "prob"})) {
           const double d = to_double(k, x);
           if (n == "b") a.jitter_brightness = d;
           else if (n == "c") a.jitter_contrast = d;
           else if (n == "s") a.jitter_saturation = d;
           else if (n == "h") a.jitter_hue = d;
           else a.jitter_prob = d;
         }
       }},
      {"random_horizontal_flip",
       [](RunConfig& c, auto& k, auto& v) {
         for (const auto& [n, x] : items(k, v, {"prob"})) {
           c.train.augmentation.hflip_prob = to_double(k, x);
         }
       }},
      {"random_perspective",
       [](RunConfig& c, auto& k, auto& v) {
         auto& a = c.train.augmentation;
         for (const auto& [n, x] : items(k, v, {"s", "prob"})) {
           if (n == "s") a.perspective_scale = to_double(k, x);
           else a.perspective_prob = to_double(k, x);
         }
       }},
      {"random_resize",
       [](RunConfig& c, auto& k, auto& v) {
         auto& a = c.train.augmentation;
         for (const auto& [n, x] : items(k, v, {"s", "prob"})) {
           if (n == "s") {
             const auto s = numbers(k, x);
             if (s.size() != 2) throw ValidationError("config: '" + k + "' s expects min,max");
             a.resize_min = s[0];
             a.resize_max = s[1];
           } else {
             a.resize_prob = to_double(k, x);
           }
         }
       }},
      {"cutmix",
       [](RunConfig& c, auto& k, auto& v) {
         auto& a = c.train.augmentation;
         for (const auto& [n, x] : items(k, v, {"n", "prob", "area"})) {
           if (n == "n") {
             a.cutmix_n = to_int(k, x);
           } else if (n == "prob") {
             a.cutmix_prob = to_double(k, x);
           } else {
             const auto s = numbers(k, x);
             if (s.size() != 2) throw ValidationError("config: '" + k + "' area expects min,max");
             a.cutmix_area_min = s[0];
             a.cutmix_area_max = s[1];
           }
         }
       }},
      // Run keys outside the recipe table.
      {"model",
       [](RunConfig& c, auto&, auto& v) {
         const auto toggles = c.model.toggles;
         c.model = build_variant(trim(v));
         c.model.toggles = toggles;
       }},
      {"ablation",
       [](RunConfig& c, auto& k, auto& v) {
         auto& t = c.model.toggles;
         for (const auto& [n, x] : items(k, v, {"dc", "grm", "sa", "dks", "ds"})) {
           const bool b = to_bool(k, x);
           if (n == "dc") t.dc = b;
           else if (n == "grm") t.grm = b;
           else if (n == "sa") t.sa = b;
           else if (n == "dks") t.dks = b;
           else t.ds = b;
         }
       }},
      {"dataset", [](RunConfig& c, auto&, auto& v) { c.dataset = data::parse_dataset(trim(v)); }},
      {"data_root", [](RunConfig& c, auto&, auto& v) { c.data_root = trim(v); }},
      {"output_dir", [](RunConfig& c, auto&, auto& v) { c.output_dir = trim(v); }},
      {"seed",
       [](RunConfig& c, auto& k, auto& v) {
         const double d = to_double(k, v);
         if (d < 0) throw ValidationError("config: 'seed' must be >= 0");
         c.train.seed = static_cast<uint64_t>(d);
       }},
      {"max_epochs", [](RunConfig& c, auto& k, auto& v) { c.train.max_epochs = to_int(k, v); }},
      {"min_batches_per_epoch",
       [](RunConfig& c, auto& k, auto& v) { c.train.min_batches_per_epoch = to_int(k, v); }},
      {"threads", [](RunConfig& c, auto& k, auto& v) { c.train.threads = to_int(k, v); }},
  };
  return table;
}

std::string join_numbers(const std::vector<double>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(base_lr > 0)) throw ValidationError("TrainConfig: base_lr must be positive");
  if (!(eta_min >= 0 && eta_min <= base_lr)) {
    throw ValidationError("TrainConfig: eta_min must lie in [0, base_lr]");
  }
  if (warmup_epochs < 0) throw ValidationError("TrainConfig: warm-up epochs must be >= 0");
  if (cycle_epochs < 1) throw ValidationError("TrainConfig: cycle epochs must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw ValidationError("TrainConfig: optimizer momentum must lie in [0, 1)");
  }
  if (weight_decay < 0) throw ValidationError("TrainConfig: weight decay must be >= 0");
  if (!(threshold > 0 && threshold < 1)) {
    throw ValidationError("TrainConfig: binary threshold must lie in (0, 1)");
  }
  if (batch_size < 1) throw ValidationError("TrainConfig: batch size must be >= 1");
  if (early_stop_epochs < 1) throw ValidationError("TrainConfig: early stop epochs must be >= 1");
  if (min_batches_per_epoch < 1) {
    throw ValidationError("TrainConfig: min_batches_per_epoch must be >= 1");
  }
  if (max_epochs < 0) throw ValidationError("TrainConfig: max_epochs must be >= 0");
  if (threads < 1) throw ValidationError("TrainConfig: threads must be >= 1");
  for (const auto& [d, side] : padded_shape) {
    if (side < 32 || side % 32 != 0) {
      throw ValidationError("TrainConfig: padded shape for " + data::to_string(d) +
                            " must be a positive multiple of 32");
    }
  }
  augmentation.validate();
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  const auto& table = setters();
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) {
      throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" +
                            key + "'");
    }
    it->second(cfg, key, value);
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config: " + path.string());
  return parse_config(in);
}

std::string format_config(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& a = t.augmentation;
  const auto& g = cfg.model.toggles;
  std::ostringstream os;
  os << "model = " << cfg.model.name << "\n"
     << "ablation = dc=" << g.dc << " grm=" << g.grm << " sa=" << g.sa << " dks=" << g.dks
     << " ds=" << g.ds << "\n";
  if (cfg.dataset) os << "dataset = " << data::to_string(*cfg.dataset) << "\n";
  if (!cfg.data_root.empty()) os << "data_root = " << cfg.data_root.string() << "\n";
  os << "output_dir = " << cfg.output_dir.string() << "\n"
     << "seed = " << t.seed << "\n"
     << "max_epochs = " << t.max_epochs << "\n"
     << "min_batches_per_epoch = " << t.min_batches_per_epoch << "\n"
     << "threads = " << t.threads << "\n"
     << "base_lr = " << t.base_lr << "\n"
     << "lr_scheduler = Linear warm-up, Cosine annealing\n"
     << "lr_scheduler_warm_up_epochs = " << t.warmup_epochs << "\n"
     << "lr_scheduler_cycle_epochs = " << t.cycle_epochs << "\n"
     << "lr_scheduler_eta_min = " << t.eta_min << "\n"
     << "early_stop_epochs = " << t.early_stop_epochs << "\n"
     << "early_stop_metric = F1 score\n"
     << "optimizer = AdamW\n"
     << "optimizer_momentum = " << t.beta1 << ", " << t.beta2 << "\n"
     << "weight_decay = " << t.weight_decay << "\n"
     << "criterion = Dice + BCE\n"
     << "binary_threshold = " << t.threshold << "\n"
     << "batch_size = " << t.batch_size << "\n"
     << "center_padded_shape =";
  const std::map<data::Dataset, const char*> letters{{data::Dataset::kDrive, "D"},
                                                     {data::Dataset::kStare, "S"},
                                                     {data::Dataset::kChaseDb1, "C"},
                                                     {data::Dataset::kHrf, "H"}};
  for (const auto& [d, side] : t.padded_shape) os << " " << letters.at(d) << "=" << side;
  std::vector<double> kernels(a.blur_kernels.begin(), a.blur_kernels.end());
  os << "\n"
     << "random_crop = " << a.crop << "\n"
     << "random_blur = k=" << join_numbers(kernels) << " sigma=" << a.blur_sigma_min << ","
     << a.blur_sigma_max << " prob=" << a.blur_prob << "\n"
     << "random_jitter = b=" << a.jitter_brightness << " c=" << a.jitter_contrast
     << " s=" << a.jitter_saturation << " h=" << a.jitter_hue << " prob=" << a.jitter_prob
     << "\n"
     << "random_horizontal_flip = prob=" << a.hflip_prob << "\n"
     << "random_perspective = s=" << a.perspective_scale << " prob=" << a.perspective_prob
     << "\n"
     << "random_resize = s=" << a.resize_min << "," << a.resize_max
     << " prob=" << a.resize_prob << "\n"
     << "cutmix = n=" << a.cutmix_n << " prob=" << a.cutmix_prob
     << " area=" << a.cutmix_area_min << "," << a.cutmix_area_max << "\n";
  return os.str();
}

void apply_environment(RunConfig& cfg) {
  if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') {
    cfg.data_root = root;
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  const auto& t = c.toggles;
  return {{"name", c.name},
          {"base_channels", c.base_channels},
          {"depths", c.depths},
          {"toggles", {{"dc", t.dc}, {"grm", t.grm}, {"sa", t.sa}, {"dks", t.dks}, {"ds", t.ds}}},
          {"grm_radius", c.grm_spec.radius},
          {"grm_eps", c.grm_spec.regularizer_eps},
          {"in_channels", c.in_channels},
          {"num_heads", c.num_heads},
          {"expansion", c.expansion},
          {"drop_path_rate", c.drop_path_rate},
          {"gamma_init", c.gamma_init}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.name = j.at("name").get<std::string>();
    c.base_channels = j.at("base_channels").get<int64_t>();
    c.depths = j.at("depths").get<std::array<int, kNumStages>>();
    const auto& t = j.at("toggles");
    c.toggles = {t.at("dc").get<bool>(), t.at("grm").get<bool>(), t.at("sa").get<bool>(),
                 t.at("dks").get<bool>(), t.at("ds").get<bool>()};
    c.grm_spec.radius = j.at("grm_radius").get<int>();
    c.grm_spec.regularizer_eps = j.at("grm_eps").get<double>();
    c.in_channels = j.at("in_channels").get<int64_t>();
    c.num_heads = j.at("num_heads").get<int>();
    c.expansion = j.at("expansion").get<int64_t>();
    c.drop_path_rate = j.at("drop_path_rate").get<double>();
    c.gamma_init = j.at("gamma_init").get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json padded = nlohmann::json::object();
  for (const auto& [d, side] : c.padded_shape) padded[data::to_string(d)] = side;
  const auto& a = c.augmentation;
  return {{"base_lr", c.base_lr},
          {"warmup_epochs", c.warmup_epochs},
          {"cycle_epochs", c.cycle_epochs},
          {"eta_min", c.eta_min},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"weight_decay", c.weight_decay},
          {"threshold", c.threshold},
          {"batch_size", c.batch_size},
          {"early_stop_epochs", c.early_stop_epochs},
          {"min_batches_per_epoch", c.min_batches_per_epoch},
          {"max_epochs", c.max_epochs},
          {"padded_shape", padded},
          {"seed", c.seed},
          {"threads", c.threads},
          {"augmentation",
           {{"blur_kernels", a.blur_kernels},
            {"blur_prob", a.blur_prob},
            {"blur_sigma", {a.blur_sigma_min, a.blur_sigma_max}},
            {"jitter", {a.jitter_brightness, a.jitter_contrast, a.jitter_saturation,
                        a.jitter_hue}},
            {"jitter_prob", a.jitter_prob},
            {"hflip_prob", a.hflip_prob},
            {"perspective_scale", a.perspective_scale},
            {"perspective_prob", a.perspective_prob},
            {"resize", {a.resize_min, a.resize_max}},
            {"resize_prob", a.resize_prob},
            {"crop", a.crop},
            {"crop_random_prob", a.crop_random_prob},
            {"cutmix_n", a.cutmix_n},
            {"cutmix_prob", a.cutmix_prob},
            {"cutmix_area", {a.cutmix_area_min, a.cutmix_area_max}}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.base_lr = j.at("base_lr").get<double>();
    c.warmup_epochs = j.at("warmup_epochs").get<int>();
    c.cycle_epochs = j.at("cycle_epochs").get<int>();
    c.eta_min = j.at("eta_min").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.threshold = j.at("threshold").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.early_stop_epochs = j.at("early_stop_epochs").get<int>();
    c.min_batches_per_epoch = j.at("min_batches_per_epoch").get<int>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.padded_shape.clear();
    for (const auto& [name, side] : j.at("padded_shape").items()) {
      c.padded_shape[data::parse_dataset(name)] = side.get<int>();
    }
    c.seed = j.at("seed").get<uint64_t>();
    c.threads = j.at("threads").get<int>();
    const auto& a = j.at("augmentation");
    auto& g = c.augmentation;
    g.blur_kernels = a.at("blur_kernels").get<std::vector<int>>();
    g.blur_prob = a.at("blur_prob").get<double>();
    g.blur_sigma_min = a.at("blur_sigma").at(0).get<double>();
    g.blur_sigma_max = a.at("blur_sigma").at(1).get<double>();
    g.jitter_brightness = a.at("jitter").at(0).get<double>();
    g.jitter_contrast = a.at("jitter").at(1).get<double>();
    g.jitter_saturation = a.at("jitter").at(2).get<double>();
    g.jitter_hue = a.at("jitter").at(3).get<double>();
    g.jitter_prob = a.at("jitter_prob").get<double>();
    g.hflip_prob = a.at("hflip_prob").get<double>();
    g.perspective_scale = a.at("perspective_scale").get<double>();
    g.perspective_prob = a.at("perspective_prob").get<double>();
    g.resize_min = a.at("resize").at(0).get<double>();
    g.resize_max = a.at("resize").at(1).get<double>();
    g.resize_prob = a.at("resize_prob").get<double>();
    g.crop = a.at("crop").get<int>();
    g.crop_random_prob = a.at("crop_random_prob").get<double>();
    g.cutmix_n = a.at("cutmix_n").get<int>();
    g.cutmix_prob = a.at("cutmix_prob").get<double>();
    g.cutmix_area_min = a.at("cutmix_area").at(0).get<double>();
    g.cutmix_area_max = a.at("cutmix_area").at(1).get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
}

}  // namespace fsg
