#include "fsgnet/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "fsgnet/augment.hpp"
#include "fsgnet/errors.hpp"
#include "fsgnet/image_io.hpp"
#include "fsgnet/objective.hpp"

namespace fs = std::filesystem;

namespace fsg {
namespace {

cv::Mat tensor_to_mat(const torch::Tensor& hw) {
  auto t = hw.detach().to(torch::kFloat32).contiguous();
  cv::Mat m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_32FC1);
  std::memcpy(m.data, t.data_ptr<float>(), sizeof(float) * static_cast<size_t>(t.numel()));
  return m;
}

// Per-head maps upsampled to the padded frame and cropped back.
std::vector<cv::Mat> head_maps(const Predictor& predictor, const cv::Mat& image,
                               const data::PaddingRecord& rec) {
  const cv::Mat padded = data::center_pad(image, rec);
  const auto x = image_to_tensor(padded).unsqueeze(0);
  const auto preds = predictor(x);
  if (preds.empty()) throw ValidationError("predictor returned no maps");
  std::vector<cv::Mat> out;
  for (const auto& p : preds) {
    auto t = p.reshape({1, 1, p.size(-2), p.size(-1)});
    if (t.size(2) != rec.pad_h || t.size(3) != rec.pad_w) {
      t = torch::nn::functional::interpolate(
          t, torch::nn::functional::InterpolateFuncOptions()
                 .size(std::vector<int64_t>{rec.pad_h, rec.pad_w})
                 .mode(torch::kBilinear)
                 .align_corners(false));
    }
    out.push_back(data::unpad(tensor_to_mat(t[0][0]), rec));
  }
  return out;
}

cv::Mat to_u8(const cv::Mat& prob) {
  cv::Mat out;
  prob.convertTo(out, CV_8U, 255.0);
  return out;
}

std::string config_key(const ModelConfig& c) { return to_json(c).dump(); }

}  // namespace

double lr_at(const TrainConfig& cfg, double epoch) {
  if (!(epoch >= 0)) throw ValidationError("lr_at: epoch must be >= 0");
  const double start = cfg.base_lr / 20.0;
  if (epoch < cfg.warmup_epochs) {
    return start + (cfg.base_lr - start) * epoch / cfg.warmup_epochs;
  }
  const double t = std::fmod(epoch - cfg.warmup_epochs, static_cast<double>(cfg.cycle_epochs));
  return cfg.eta_min + 0.5 * (cfg.base_lr - cfg.eta_min) *
                           (1.0 + std::cos(std::numbers::pi * t / cfg.cycle_epochs));
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw ValidationError("EarlyStopper: patience must be >= 1");
}

bool EarlyStopper::update(double score) {
  improved_ = best_epoch_ < 0 || score > best_;
  if (improved_) {
    best_ = score;
    best_epoch_ = epochs_;
  }
  ++epochs_;
  return epochs_ - 1 - best_epoch_ >= patience_;
}

std::vector<std::pair<std::string, torch::Tensor>> snapshot(FSGNet& model) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : model->named_parameters(true)) {
    out.emplace_back(p.key(), p.value().detach().clone());
  }
  for (const auto& b : model->named_buffers(true)) {
    out.emplace_back(b.key(), b.value().detach().clone());
  }
  return out;
}

FSGNet instantiate(const Checkpoint& ckpt) {
  auto model = make_model(ckpt.model, ckpt.train.seed);
  std::vector<std::pair<std::string, torch::Tensor>> targets;
  for (const auto& p : model->named_parameters(true)) targets.emplace_back(p.key(), p.value());
  for (const auto& b : model->named_buffers(true)) targets.emplace_back(b.key(), b.value());
  if (targets.size() != ckpt.weights.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(ckpt.weights.size()) +
                          " tensors, model expects " + std::to_string(targets.size()));
  }
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < targets.size(); ++i) {
    const auto& [name, src] = ckpt.weights[i];
    auto& [tname, dst] = targets[i];
    if (name != tname || src.sizes() != dst.sizes()) {
      throw ValidationError("checkpoint tensor '" + name + "' does not match model tensor '" +
                            tname + "'");
    }
    dst.copy_(src);
  }
  model->eval();
  return model;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  c10::List<std::string> names;
  c10::List<at::Tensor> tensors;
  for (const auto& [n, t] : ckpt.weights) {
    names.push_back(n);
    tensors.push_back(t.detach().cpu().contiguous());
  }
  const auto blob = torch::pickle_save(
      c10::ivalue::Tuple::create({c10::IValue(config_key(ckpt.model)), c10::IValue(names),
                                  c10::IValue(tensors)}));
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint: " + path.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }

  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : ckpt.history) {
    history.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"val_f1", e.val_f1}});
  }
  const nlohmann::json side{{"model", to_json(ckpt.model)},
                            {"train", to_json(ckpt.train)},
                            {"seed", ckpt.train.seed},
                            {"best_val_f1", ckpt.best_val_f1},
                            {"epoch", ckpt.epoch},
                            {"rng_state", ckpt.rng_state},
                            {"history", history}};
  std::ofstream meta(path.string() + ".json");
  if (!meta) throw ValidationError("cannot write checkpoint sidecar: " + path.string() + ".json");
  meta << side.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& path, const std::optional<ModelConfig>& expected) {
  const fs::path sidecar = path.string() + ".json";
  std::ifstream meta(sidecar);
  if (!meta) throw ValidationError("missing checkpoint sidecar: " + sidecar.string());
  nlohmann::json side;
  try {
    meta >> side;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corrupt checkpoint sidecar: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  ckpt.model = model_config_from_json(side.at("model"));
  ckpt.train = train_config_from_json(side.at("train"));
  ckpt.best_val_f1 = side.value("best_val_f1", 0.0);
  ckpt.epoch = side.value("epoch", -1);
  ckpt.rng_state = side.value("rng_state", std::string());
  for (const auto& e : side.value("history", nlohmann::json::array())) {
    ckpt.history.push_back({e.at("epoch").get<int>(), e.at("lr").get<double>(),
                            e.at("loss").get<double>(), e.at("val_f1").get<double>()});
  }
  if (expected && !(*expected == ckpt.model)) {
    throw ValidationError("checkpoint model config differs from the requested model (" +
                          ckpt.model.name + " vs " + expected->name + ")");
  }

  const auto bytes = io::read_file(path);
  c10::IValue root;
  try {
    root = torch::pickle_load(std::vector<char>(bytes.begin(), bytes.end()));
  } catch (const c10::Error&) {
    throw ValidationError("corrupt checkpoint archive: " + path.string());
  }
  if (!root.isTuple() || root.toTupleRef().elements().size() != 3) {
    throw ValidationError("unexpected checkpoint archive layout: " + path.string());
  }
  const auto& el = root.toTupleRef().elements();
  if (el[0].toStringRef() != config_key(ckpt.model)) {
    throw ValidationError("checkpoint archive and sidecar describe different models");
  }
  const auto names = el[1].toList();
  const auto tensors = el[2].toTensorList();
  if (names.size() != tensors.size()) throw ValidationError("corrupt checkpoint archive");
  for (size_t i = 0; i < names.size(); ++i) {
    ckpt.weights.emplace_back(names.get(i).toStringRef(), tensors.get(i));
  }
  return ckpt;
}

torch::Tensor image_to_tensor(const cv::Mat& rgb) {
  if (rgb.type() != CV_8UC3) throw ValidationError("expected an 8-bit RGB image");
  cv::Mat c = rgb.isContinuous() ? rgb : rgb.clone();
  auto t = torch::from_blob(c.data, {c.rows, c.cols, 3}, torch::kUInt8)
               .permute({2, 0, 1})
               .to(torch::kFloat32)
               .div(255.0);
  return t.contiguous();
}

torch::Tensor mask_to_tensor(const cv::Mat& mask) {
  if (mask.type() != CV_8UC1) throw ValidationError("expected an 8-bit single-channel mask");
  cv::Mat c = mask.isContinuous() ? mask : mask.clone();
  return torch::from_blob(c.data, {1, c.rows, c.cols}, torch::kUInt8)
      .to(torch::kFloat32)
      .clamp_max(1.0)
      .contiguous();
}

data::PaddingRecord inference_padding(const TrainConfig& cfg, int h, int w,
                                      std::optional<data::Dataset> d) {
  if (d) {
    if (const auto it = cfg.padded_shape.find(*d); it != cfg.padded_shape.end()) {
      return data::padding_to(h, w, it->second, it->second);
    }
  }
  return data::padding_for(h, w, std::nullopt);
}

Predictor model_predictor(FSGNet& model) {
  return [model](const torch::Tensor& x) mutable {
    torch::NoGradGuard no_grad;
    model->eval();
    return model->forward(x).preds;
  };
}

cv::Mat full_probability(const Predictor& predictor, const cv::Mat& image,
                         const data::PaddingRecord& rec) {
  return head_maps(predictor, image, rec).front();
}

metrics::MetricReport evaluate(const Predictor& predictor,
                               const std::vector<data::SamplePair>& samples,
                               const TrainConfig& cfg, std::optional<data::Dataset> d) {
  if (samples.empty()) throw ValidationError("evaluate: no samples");
  metrics::ReportAccumulator acc(cfg.threshold);
  for (const auto& s : samples) {
    const auto rec = inference_padding(cfg, s.image.rows, s.image.cols, d ? d : s.dataset);
    const cv::Mat prob = full_probability(predictor, s.image, rec);
    cv::Mat mask = s.mask.isContinuous() ? s.mask : s.mask.clone();
    acc.add({prob.ptr<float>(), prob.total()}, {mask.ptr<uint8_t>(), mask.total()});
  }
  return acc.micro();
}

metrics::MetricReport evaluate(const Checkpoint& ckpt,
                               const std::vector<data::SamplePair>& samples,
                               std::optional<data::Dataset> d) {
  auto model = instantiate(ckpt);
  return evaluate(model_predictor(model), samples, ckpt.train, d);
}

Checkpoint train(const ModelConfig& model_cfg, const TrainConfig& cfg, const data::Split& split,
                 std::optional<data::Dataset> d, const TrainOptions& options) {
  model_cfg.validate();
  cfg.validate();
  if (split.train.empty()) throw ValidationError("train: empty training split");
  if (split.val.empty() && !options.skip_validation) {
    throw ValidationError("train: empty validation split");
  }
  if (cfg.augmentation.crop % kSizeMultiple != 0) {
    throw ValidationError("train: random crop must be a multiple of 32");
  }
  torch::set_num_threads(cfg.threads);

  auto model = make_model(model_cfg, cfg.seed);
  torch::manual_seed(cfg.seed);
  torch::optim::AdamW optimizer(
      model->parameters(), torch::optim::AdamWOptions(cfg.base_lr)
                               .betas({cfg.beta1, cfg.beta2})
                               .weight_decay(cfg.weight_decay));
  loss::SupervisionWeights weights;
  weights.alpha.assign(static_cast<size_t>(model_cfg.active_heads()), 1.0);

  const size_t n = split.train.size();
  const size_t want = static_cast<size_t>(cfg.batch_size) * cfg.min_batches_per_epoch;
  const size_t reps = std::max<size_t>(1, (want + n - 1) / n);
  data::Rng order_rng = data::sample_rng(cfg.seed, ~uint64_t{0});

  Checkpoint best;
  best.model = model_cfg;
  best.train = cfg;
  EarlyStopper stopper(cfg.early_stop_epochs);

  for (int epoch = 0; cfg.max_epochs == 0 || epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_at(cfg, epoch);
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
    }

    std::vector<size_t> order;
    for (size_t r = 0; r < reps; ++r) {
      for (size_t i = 0; i < n; ++i) order.push_back(i);
    }
    std::shuffle(order.begin(), order.end(), order_rng);

    // Augment every slot, then mix each with another slot of the same epoch.
    std::vector<data::SamplePair> batch_src(order.size());
    for (size_t k = 0; k < order.size(); ++k) {
      auto rng = data::sample_rng(cfg.seed, (static_cast<uint64_t>(epoch) << 32) | k);
      batch_src[k] = data::augment(split.train[order[k]], cfg.augmentation, rng);
    }
    std::vector<data::SamplePair> mixed(order.size());
    for (size_t k = 0; k < order.size(); ++k) {
      auto rng = data::sample_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull,
                                  (static_cast<uint64_t>(epoch) << 32) | k);
      const size_t partner = std::uniform_int_distribution<size_t>(0, order.size() - 1)(rng);
      mixed[k] = data::cutmix(batch_src[k], batch_src[partner], cfg.augmentation, rng);
    }

    model->train();
    double loss_sum = 0;
    int batches = 0;
    for (size_t start = 0; start < mixed.size(); start += cfg.batch_size) {
      const size_t stop = std::min(mixed.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<torch::Tensor> xs;
      std::vector<torch::Tensor> ys;
      for (size_t k = start; k < stop; ++k) {
        xs.push_back(image_to_tensor(mixed[k].image));
        ys.push_back(mask_to_tensor(mixed[k].mask));
      }
      const auto x = torch::stack(xs);
      const auto y = torch::stack(ys);
      optimizer.zero_grad();
      PredictionSet preds;
      try {
        preds = model->forward(x);
      } catch (const NonFiniteError& e) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << " (lr " << lr << "): " << e.what();
        throw DivergenceError(epoch, lr, msg.str());
      }
      auto loss = loss::deep_supervision_loss(preds, y, weights);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << " (lr " << lr << "): loss " << value;
        throw DivergenceError(epoch, lr, msg.str());
      }
      loss.backward();
      optimizer.step();
      loss_sum += value;
      ++batches;
    }

    EpochLog log{epoch, lr, loss_sum / batches, 0.0};
    if (!options.skip_validation) {
      try {
        log.val_f1 = evaluate(model_predictor(model), split.val, cfg, d).f1;
      } catch (const NonFiniteError& e) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << " (lr " << lr << "): " << e.what();
        throw DivergenceError(epoch, lr, msg.str());
      }
    }
    const bool stop = stopper.update(log.val_f1);
    best.history.push_back(log);
    if (stopper.improved()) {
      best.weights = snapshot(model);
      best.best_val_f1 = log.val_f1;
      best.epoch = epoch;
    }
    if (options.on_epoch) options.on_epoch(log);
    if (stop) break;
  }
  std::ostringstream rng_state;
  rng_state << order_rng;
  best.rng_state = rng_state.str();
  return best;
}

PredictionFiles predict(const Predictor& predictor, const TrainConfig& cfg, const cv::Mat& image,
                        const std::string& stem, const fs::path& out_dir,
                        std::optional<data::Dataset> d) {
  const auto rec = inference_padding(cfg, image.rows, image.cols, d);
  const auto maps = head_maps(predictor, image, rec);
  PredictionFiles files;
  cv::Mat mask = maps.front() > cfg.threshold;  // {0, 255}
  files.mask = out_dir / (stem + "_mask.png");
  io::write_gray(files.mask, mask);
  for (size_t i = 0; i < maps.size(); ++i) {
    files.stages.push_back(out_dir / (stem + "_stage" + std::to_string(i + 1) + ".png"));
    io::write_gray(files.stages.back(), to_u8(maps[i]));
  }
  return files;
}

PredictionFiles predict(const Checkpoint& ckpt, const fs::path& image, const fs::path& out_dir,
                        std::optional<data::Dataset> d) {
  const cv::Mat rgb = io::read_rgb(image);
  auto model = instantiate(ckpt);
  return predict(model_predictor(model), ckpt.train, rgb, image.stem().string(), out_dir, d);
}

CrossEvalResult cross_eval(const Checkpoint& ckpt, const std::vector<data::SamplePair>& samples,
                           data::Dataset target,
                           const std::optional<metrics::MetricReport>& baseline) {
  CrossEvalResult r;
  r.report = evaluate(ckpt, samples, target);
  r.baseline = baseline;
  if (baseline) {
    const auto a = r.report.values();
    const auto b = baseline->values();
    for (size_t i = 0; i < a.size(); ++i) r.deltas.push_back(a[i] - b[i]);
  }
  return r;
}

}  // namespace fsg
