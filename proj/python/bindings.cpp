#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <torch/torch.h>

#include "fsgnet/config.hpp"
#include "fsgnet/data.hpp"
#include "fsgnet/errors.hpp"
#include "fsgnet/guided_filter.hpp"
#include "fsgnet/metrics.hpp"
#include "fsgnet/network.hpp"
#include "fsgnet/objective.hpp"
#include "fsgnet/pipeline.hpp"

namespace py = pybind11;
using namespace fsg;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const F64& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kDouble).clone();
}

F64 to_array(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kDouble).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  F64 out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), sizeof(double) * c.numel());
  return out;
}

cv::Mat to_rgb(const U8& image) {
  if (image.ndim() != 3 || image.shape(2) != 3) {
    throw ValidationError("image must be an (H, W, 3) uint8 RGB array");
  }
  cv::Mat m(static_cast<int>(image.shape(0)), static_cast<int>(image.shape(1)), CV_8UC3,
            const_cast<uint8_t*>(image.data()));
  return m.clone();
}

cv::Mat to_mask(const U8& mask) {
  if (mask.ndim() != 2) throw ValidationError("mask must be an (H, W) array");
  cv::Mat m(static_cast<int>(mask.shape(0)), static_cast<int>(mask.shape(1)), CV_8UC1,
            const_cast<uint8_t*>(mask.data()));
  return m.clone();
}

F32 mat_to_array(const cv::Mat& m) {
  F32 out({m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y) {
    std::memcpy(out.mutable_data(y, 0), m.ptr<float>(y), sizeof(float) * m.cols);
  }
  return out;
}

std::optional<data::Dataset> dataset_of(const std::optional<std::string>& name) {
  if (!name) return std::nullopt;
  return data::parse_dataset(*name);
}

py::dict report_dict(const metrics::MetricReport& r) {
  py::dict d;
  const auto v = r.values();
  const auto& names = metrics::MetricReport::column_names();
  for (size_t i = 0; i < v.size(); ++i) d[py::str(names[i])] = v[i];
  return d;
}

// Trained network plus its recipe, loaded from a checkpoint.
class Model {
 public:
  explicit Model(const std::filesystem::path& path)
      : ckpt_(load_checkpoint(path)), net_(instantiate(ckpt_)) {}

  F32 predict(const U8& image, const std::optional<std::string>& dataset) {
    const cv::Mat rgb = to_rgb(image);
    const auto rec = inference_padding(ckpt_.train, rgb.rows, rgb.cols, dataset_of(dataset));
    const auto predictor = model_predictor(net_);
    return mat_to_array(full_probability(predictor, rgb, rec));
  }

  py::dict evaluate(const std::vector<U8>& images, const std::vector<U8>& masks,
                    const std::optional<std::string>& dataset) {
    if (images.size() != masks.size()) throw ValidationError("images and masks differ in count");
    std::vector<data::SamplePair> samples;
    for (size_t i = 0; i < images.size(); ++i) {
      data::SamplePair s;
      s.image = to_rgb(images[i]);
      s.mask = to_mask(masks[i]);
      s.id = std::to_string(i);
      samples.push_back(std::move(s));
    }
    return report_dict(fsg::evaluate(model_predictor(net_), samples, ckpt_.train,
                                     dataset_of(dataset)));
  }

  std::string variant() const { return ckpt_.model.name; }
  double best_val_f1() const { return ckpt_.best_val_f1; }
  int epoch() const { return ckpt_.epoch; }

 private:
  Checkpoint ckpt_;
  FSGNet net_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "FSG-Net retinal vessel segmentation core";
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  m.def("box_mean", [](const F64& x, int radius) { return to_array(gf::box_mean(to_tensor(x), radius)); },
        py::arg("x"), py::arg("radius"), "Clipped-window mean over the last two axes.");
  m.def(
      "guided_filter",
      [](const F64& guide, const F64& input, int radius, double eps) {
        return to_array(gf::guided_filter(to_tensor(guide), to_tensor(input), {radius, eps}));
      },
      py::arg("guide"), py::arg("input"), py::arg("radius") = 2, py::arg("eps") = 1e-2);
  m.def(
      "attention_guided_coefficients",
      [](const F64& guide, const F64& target, const F64& attention, int radius, double eps) {
        const auto f = gf::attention_guided_coefficients(to_tensor(guide), to_tensor(target),
                                                         to_tensor(attention), {radius, eps});
        return py::make_tuple(to_array(f.a), to_array(f.b));
      },
      py::arg("guide"), py::arg("target"), py::arg("attention"), py::arg("radius") = 2,
      py::arg("eps") = 1e-2, "Per-window (a, b) minimizing the attention-weighted energy.");
  m.def(
      "attention_guided_filter",
      [](const F64& guide_hi, const F64& input_lo, const F64& attention, int radius, double eps) {
        return to_array(gf::attention_guided_filter(to_tensor(guide_hi), to_tensor(input_lo),
                                                    to_tensor(attention), {radius, eps}));
      },
      py::arg("guide_hi"), py::arg("input_lo"), py::arg("attention"), py::arg("radius") = 2,
      py::arg("eps") = 1e-2);

  m.def(
      "bce_loss",
      [](const F64& p, const F64& y) { return loss::bce_loss(to_tensor(p), to_tensor(y)).item<double>(); },
      py::arg("pred"), py::arg("target"));
  m.def(
      "dice_loss",
      [](const F64& p, const F64& y, double eps) {
        return loss::dice_loss(to_tensor(p), to_tensor(y), eps).item<double>();
      },
      py::arg("pred"), py::arg("target"), py::arg("eps") = 1.0);

  m.def(
      "confusion",
      [](const F32& probs, const U8& mask, std::optional<U8> valid, double threshold) {
        if (probs.size() != mask.size()) throw ValidationError("probs and mask differ in size");
        std::span<const uint8_t> v;
        if (valid) v = {valid->data(), static_cast<size_t>(valid->size())};
        const auto c = metrics::confusion({probs.data(), static_cast<size_t>(probs.size())},
                                          {mask.data(), static_cast<size_t>(mask.size())}, v,
                                          threshold);
        py::dict d;
        d["tp"] = c.tp;
        d["fp"] = c.fp;
        d["tn"] = c.tn;
        d["fn"] = c.fn;
        return d;
      },
      py::arg("probs"), py::arg("mask"), py::arg("valid") = py::none(), py::arg("threshold") = 0.5);
  m.def(
      "score",
      [](const F32& probs, const U8& mask, std::optional<U8> valid, double threshold) {
        metrics::ReportAccumulator acc(threshold);
        std::span<const uint8_t> v;
        if (valid) v = {valid->data(), static_cast<size_t>(valid->size())};
        if (probs.size() != mask.size()) throw ValidationError("probs and mask differ in size");
        acc.add({probs.data(), static_cast<size_t>(probs.size())},
                {mask.data(), static_cast<size_t>(mask.size())}, v);
        return report_dict(acc.micro());
      },
      py::arg("probs"), py::arg("mask"), py::arg("valid") = py::none(), py::arg("threshold") = 0.5,
      "The six report metrics (x100) of one probability map.");
  m.def(
      "auc",
      [](const F32& probs, const U8& mask) {
        if (probs.size() != mask.size()) throw ValidationError("probs and mask differ in size");
        return metrics::auc({probs.data(), static_cast<size_t>(probs.size())},
                            {mask.data(), static_cast<size_t>(mask.size())});
      },
      py::arg("probs"), py::arg("mask"));
  m.def("rank_average", &metrics::rank_average, py::arg("table"), py::arg("higher_is_better"));
  m.def("format_delta", &metrics::format_delta, py::arg("delta"));

  py::class_<data::PaddingRecord>(m, "PaddingRecord")
      .def_readonly("orig_h", &data::PaddingRecord::orig_h)
      .def_readonly("orig_w", &data::PaddingRecord::orig_w)
      .def_readonly("pad_h", &data::PaddingRecord::pad_h)
      .def_readonly("pad_w", &data::PaddingRecord::pad_w)
      .def_readonly("top", &data::PaddingRecord::top)
      .def_readonly("left", &data::PaddingRecord::left)
      .def("__repr__", [](const data::PaddingRecord& r) {
        return "PaddingRecord(" + std::to_string(r.orig_h) + "x" + std::to_string(r.orig_w) +
               " -> " + std::to_string(r.pad_h) + "x" + std::to_string(r.pad_w) + ", top=" +
               std::to_string(r.top) + ", left=" + std::to_string(r.left) + ")";
      });
  m.def(
      "padding_for",
      [](int h, int w, const std::optional<std::string>& dataset) {
        return data::padding_for(h, w, dataset_of(dataset));
      },
      py::arg("h"), py::arg("w"), py::arg("dataset") = py::none());

  m.def("variant_names", &variant_names);
  m.def(
      "count_parameters", [](const std::string& v) { return count_parameters(build_variant(v)); },
      py::arg("variant"));
  m.def("reference_params_millions", [](const std::string& v) { return reference_params_millions(v); },
        py::arg("variant"));
  m.def(
      "lr_at", [](double epoch) { return lr_at(TrainConfig{}, epoch); }, py::arg("epoch"),
      "Learning rate of the default recipe at a (fractional) epoch.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("predict", &Model::predict, py::arg("image"), py::arg("dataset") = py::none(),
           "Full-resolution vessel probability map of an (H, W, 3) uint8 RGB image.")
      .def("evaluate", &Model::evaluate, py::arg("images"), py::arg("masks"),
           py::arg("dataset") = py::none())
      .def_property_readonly("variant", &Model::variant)
      .def_property_readonly("best_val_f1", &Model::best_val_f1)
      .def_property_readonly("epoch", &Model::epoch);
}
