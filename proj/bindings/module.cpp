#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tsgan/attention.hpp"
#include "tsgan/gradcheck.hpp"
#include "tsgan/metrics.hpp"
#include "tsgan/phantom.hpp"
#include "tsgan/pipeline.hpp"
#include "tsgan/translator.hpp"

namespace py = pybind11;
using namespace tsgan;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int64_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
  Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> a(shape);
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

LabelMask to_mask(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("mask must be a 2-d uint8 array");
  LabelMask m;
  m.height = a.shape(0);
  m.width = a.shape(1);
  m.labels.assign(a.data(), a.data() + a.size());
  return m;
}

py::array_t<uint8_t> mask_to_array(const LabelMask& m) {
  py::array_t<uint8_t> a({static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width)});
  std::copy(m.labels.begin(), m.labels.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "two-stage mask-conditioned nodule image synthesis core";

  py::class_<BoundingBox>(mod, "BoundingBox")
      .def(py::init<>())
      .def(py::init([](int64_t x, int64_t y, int64_t w, int64_t h) {
             return BoundingBox{x, y, w, h};
           }),
           py::arg("x"), py::arg("y"), py::arg("w"), py::arg("h"))
      .def_readwrite("x", &BoundingBox::x)
      .def_readwrite("y", &BoundingBox::y)
      .def_readwrite("w", &BoundingBox::w)
      .def_readwrite("h", &BoundingBox::h)
      .def("__eq__", [](const BoundingBox& a, const BoundingBox& b) { return a == b; })
      .def("__repr__", [](const BoundingBox& b) {
        return "BoundingBox(x=" + std::to_string(b.x) + ", y=" + std::to_string(b.y) +
               ", w=" + std::to_string(b.w) + ", h=" + std::to_string(b.h) + ")";
      });

  // mask codec
  mod.def("encode_one_hot",
          [](py::array_t<uint8_t, py::array::c_style | py::array::forcecast> mask) {
            return to_array(encode_one_hot(to_mask(mask)).planes);
          },
          py::arg("mask"), "labels [H,W] uint8 -> one-hot [6,H,W]");
  mod.def("decode_labels",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> scores) {
            Tensor t = to_tensor(scores);
            return mask_to_array(decode_labels(ClassScoreVolume{std::move(t)}));
          },
          py::arg("scores"), "class scores [6,H,W] -> argmax labels [H,W]");
  mod.def("validate_mask",
          [](py::array_t<uint8_t, py::array::c_style | py::array::forcecast> mask) {
            ValidationReport r = validate_mask(to_mask(mask));
            py::dict d;
            d["valid"] = r.valid;
            d["nodule_present"] = r.nodule_present;
            d["class_counts"] = std::vector<int64_t>(r.class_counts.begin(), r.class_counts.end());
            return d;
          },
          py::arg("mask"));
  mod.def("nodule_bboxes",
          [](py::array_t<uint8_t, py::array::c_style | py::array::forcecast> mask) {
            return nodule_bboxes(to_mask(mask));
          },
          py::arg("mask"));

  // attention building blocks (forward only; training stays in C++)
  mod.def("soft_pool",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> x, int64_t kernel,
             int64_t stride) {
            ad::NodePtr out = attn::soft_pool(ad::constant(to_tensor(x)), kernel, stride);
            return to_array(out->value);
          },
          py::arg("x"), py::arg("kernel"), py::arg("stride"),
          "exponentially weighted pooling of [N,C,H,W]");

  // losses
  mod.def("total_generator_loss",
          [](double adv, double l1, double perceptual, double lambda_l1,
             double lambda_perceptual) {
            return translator::total_generator_loss(
                translator::LossParts{adv, l1, perceptual},
                translator::LossWeights{lambda_l1, lambda_perceptual});
          },
          py::arg("adv"), py::arg("l1"), py::arg("perceptual"), py::arg("lambda_l1") = 200.0,
          py::arg("lambda_perceptual") = 10.0);
  mod.def("lr_schedule",
          [](int64_t epoch, int64_t epochs, int64_t decay_start, double lr) {
            translator::TranslatorConfig cfg;
            cfg.epochs = epochs;
            cfg.decay_start_epoch = decay_start;
            cfg.lr = lr;
            return translator::lr_schedule(epoch, cfg);
          },
          py::arg("epoch"), py::arg("epochs") = 200, py::arg("decay_start") = 100,
          py::arg("lr") = 2e-4);
  mod.def("progressive_schedule",
          [](int64_t step, int64_t start_resolution, int64_t target_resolution,
             int64_t steps_per_resolution) {
            maskgan::MaskGanConfig cfg;
            cfg.start_resolution = start_resolution;
            cfg.target_resolution = target_resolution;
            cfg.steps_per_resolution = steps_per_resolution;
            maskgan::Schedule s = maskgan::progressive_schedule(step, cfg);
            return py::make_tuple(s.resolution, s.alpha);
          },
          py::arg("step"), py::arg("start_resolution") = 4, py::arg("target_resolution") = 64,
          py::arg("steps_per_resolution") = 10000);

  // metrics
  mod.def("psnr",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
             py::array_t<double, py::array::c_style | py::array::forcecast> y, double max_val) {
            return metrics::psnr(to_tensor(x), to_tensor(y), max_val);
          },
          py::arg("x"), py::arg("y"), py::arg("max_val") = 2.0);
  mod.def("ssim",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
             py::array_t<double, py::array::c_style | py::array::forcecast> y,
             double dynamic_range) {
            metrics::SsimConfig cfg;
            cfg.dynamic_range = dynamic_range;
            return metrics::ssim(to_tensor(x), to_tensor(y), cfg);
          },
          py::arg("x"), py::arg("y"), py::arg("dynamic_range") = 2.0);
  mod.def("fid_images",
          [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& a,
             const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& b,
             uint64_t feature_seed) {
            std::vector<Tensor> ta, tb;
            for (const auto& x : a) ta.push_back(to_tensor(x));
            for (const auto& x : b) tb.push_back(to_tensor(x));
            FeatureNetwork phi = FeatureNetwork::seeded(feature_seed);
            return metrics::fid(metrics::gaussian_stats(metrics::embed(ta, phi)),
                                metrics::gaussian_stats(metrics::embed(tb, phi)));
          },
          py::arg("a"), py::arg("b"), py::arg("feature_seed") = 1234,
          "FID between two image sets under the fixed desk-scale embedder");
  mod.def("iou", &metrics::iou, py::arg("a"), py::arg("b"));
  mod.def("mean_ap",
          [](const std::vector<std::tuple<BoundingBox, double, int64_t>>& dets,
             const std::vector<std::tuple<BoundingBox, int64_t>>& gts) {
            std::vector<metrics::Detection> d;
            for (const auto& [box, score, img] : dets) d.push_back({box, score, img});
            std::vector<metrics::GtBox> g;
            for (const auto& [box, img] : gts) g.push_back({box, img});
            return metrics::mean_ap(d, g);
          },
          py::arg("detections"), py::arg("ground_truths"),
          "detections are (box, score, image_id); ground truths are (box, image_id)");

  // phantom data
  mod.def("generate_phantom_pair",
          [](uint64_t seed, int64_t image_size, int64_t max_diameter) {
            phantom::PhantomConfig cfg;
            cfg.image_size = image_size;
            cfg.max_diameter = max_diameter;
            cfg.validate();
            Rng rng(seed);
            phantom::PairedSample s = phantom::generate_phantom_pair(rng, cfg);
            return py::make_tuple(mask_to_array(s.mask), to_array(s.image), s.boxes);
          },
          py::arg("seed"), py::arg("image_size") = 64, py::arg("max_diameter") = 16,
          "returns (mask [H,W] uint8, image [1,H,W] in [-1,1], nodule boxes)");

  // gradient audit
  mod.def("run_gradcheck",
          [](uint64_t seed, double tolerance) {
            GradCheckReport r = run_gradcheck(seed, tolerance);
            py::list entries;
            for (const auto& e : r.entries) {
              py::dict d;
              d["target"] = e.target;
              d["max_rel_err"] = e.max_rel_err;
              d["pass"] = e.pass;
              entries.append(d);
            }
            py::dict out;
            out["all_pass"] = r.all_pass;
            out["entries"] = entries;
            return out;
          },
          py::arg("seed") = 1, py::arg("tolerance") = 1e-4);

  mod.attr("NUM_CLASSES") = kNumClasses;
  mod.attr("NODULE_CLASS") = kNoduleClass;
}
