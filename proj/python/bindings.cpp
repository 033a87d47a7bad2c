#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "plvton/geowarp.hpp"
#include "plvton/pipeline.hpp"
#include "plvton/synthetic.hpp"

namespace py = pybind11;
using namespace plvton;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const Array& a) {
    std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
    return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

torch::Tensor to_labels(const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
    return torch::from_blob(const_cast<int64_t*>(a.data()), shape, torch::kLong).clone();
}

Array to_numpy(const torch::Tensor& t) {
    const auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    Array out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
    std::memcpy(out.mutable_data(), c.data_ptr<double>(), static_cast<size_t>(c.numel()) * sizeof(double));
    return out;
}

py::array_t<int64_t> labels_to_numpy(const torch::Tensor& t) {
    const auto c = t.detach().to(torch::kCPU, torch::kLong).contiguous();
    py::array_t<int64_t> out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
    std::memcpy(out.mutable_data(), c.data_ptr<int64_t>(), static_cast<size_t>(c.numel()) * sizeof(int64_t));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Three-stage virtual try-on core (warping, parsing estimation, texture fusion)";
    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<TrainingFault>(m, "TrainingFault", PyExc_RuntimeError);

    m.def("flow_warp", [](const Array& image, const Array& flow, double fill) {
        return to_numpy(flow_warp(to_tensor(image), to_tensor(flow), fill));
    }, py::arg("image"), py::arg("flow"), py::arg("fill") = 0.0);
    m.def("affine_apply", [](const Array& image, std::array<double, 4> p, double fill) {
        return to_numpy(affine_apply(to_tensor(image), AffineParams{p[0], p[1], p[2], p[3]}, fill));
    }, py::arg("image"), py::arg("params"), py::arg("fill") = 0.0, "params = (a1, a2, b1, b2)");
    m.def("resize_flow", [](const Array& flow, int64_t h, int64_t w) {
        return to_numpy(resize_flow(to_tensor(flow), h, w));
    });
    m.def("patchify", [](const Array& x, int64_t s) { return to_numpy(patchify(to_tensor(x), s)); });
    m.def("unpatch", [](const Array& x, int64_t s) { return to_numpy(unpatch(to_tensor(x), s)); });
    m.def("sobel_gradients", [](const Array& x) { return to_numpy(sobel_gradients(to_tensor(x))); });

    m.def("encode_parsing", [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& labels) {
        return to_numpy(encode_parsing(to_labels(labels)));
    });
    m.def("decode_parsing", [](const Array& p) { return labels_to_numpy(decode_parsing(to_tensor(p))); });
    m.def("build_agnostic_mask", [](const Array& parsing) { return to_numpy(build_agnostic_mask(to_tensor(parsing))); });
    m.def("compose_nonlimb", [](const Array& parsing, const Array& mask, double thr) {
        return to_numpy(compose_nonlimb(to_tensor(parsing), to_tensor(mask), thr));
    }, py::arg("parsing"), py::arg("warped_mask"), py::arg("threshold") = 0.5);
    m.def("render_keypoints", [](const std::vector<std::array<double, 3>>& pts, int64_t h, int64_t w, double sigma) {
        Pose pose;
        for (const auto& p : pts) pose.push_back({p[0], p[1], p[2] > 0.0});
        return to_numpy(render_keypoints(pose, h, w, sigma));
    }, py::arg("points"), py::arg("height"), py::arg("width"), py::arg("sigma") = 3.0, "points: (x, y, confidence) x 18");

    m.def("build_gravity_mask", [](const Array& mask, double floor) {
        return to_numpy(build_gravity_mask(to_tensor(mask), floor));
    }, py::arg("mask"), py::arg("floor") = 0.0);
    m.def("loss_gravity", [](const Array& mw, const Array& mgt, const Array& mg) {
        return loss_gravity(to_tensor(mw), to_tensor(mgt), to_tensor(mg)).item<double>();
    });
    m.def("loss_tv", [](const Array& flow, double eps) { return loss_tv(to_tensor(flow), eps).item<double>(); },
          py::arg("flow"), py::arg("epsilon") = 1e-6);
    m.def("loss_ppe", [](const Array& p, const Array& t, std::array<double, kNumParsingClasses> w, double floor) {
        ClassWeights cw;
        cw.values = w;
        return loss_ppe(to_tensor(p), to_tensor(t), cw, floor).item<double>();
    }, py::arg("predicted"), py::arg("target"), py::arg("weights") = ClassWeights{}.values, py::arg("floor") = 1e-8);

    m.def("ssim", [](const Array& x, const Array& y) { return ssim(to_tensor(x), to_tensor(y)); });
    m.def("psnr", [](const Array& x, const Array& y) { return psnr(to_tensor(x), to_tensor(y)); });
    m.def("fid", [](const Array& a, const Array& b) { return fid(to_tensor(a), to_tensor(b)); });
    m.def("lr_at", &lr_at, py::arg("step"), py::arg("total_steps"), py::arg("base_lr"));

    m.def("write_synthetic_dataset", [](const std::string& root, int64_t count, int64_t h, int64_t w, uint64_t seed) {
        synth::write_dataset(root, count, {h, w, seed});
    }, py::arg("root"), py::arg("count"), py::arg("height") = kDefaultHeight, py::arg("width") = kDefaultWidth,
       py::arg("seed") = 2023);

    m.def("train", [](const std::string& config_text) {
        const auto result = train(TrainConfig::from(KeyValueConfig::parse(config_text)));
        std::vector<std::string> lines;
        for (const auto& r : result.history) lines.push_back(r.to_line());
        return py::make_tuple(result.checkpoint.string(), lines);
    }, py::arg("config_text"), "Trains one stage from flat key = value text; returns (checkpoint, log lines).");

    m.def("infer", [](const std::string& checkpoints, const std::string& person, const std::string& cloth,
                      const std::string& out, bool intermediates, int64_t h, int64_t w) {
        auto pipeline = TryOnPipeline::load(CheckpointPaths::in_directory(checkpoints), device_from_env());
        const auto sample = load_try_on_pair(person, cloth, h, w);
        const auto outputs = pipeline.run(collate(std::span(&sample, 1)));
        std::vector<std::string> written;
        for (const auto& p : write_outputs(out, outputs, intermediates)) written.push_back(p.string());
        return written;
    }, py::arg("checkpoints"), py::arg("person"), py::arg("cloth"), py::arg("out"), py::arg("intermediates") = false,
       py::arg("height") = kDefaultHeight, py::arg("width") = kDefaultWidth);

    m.attr("NUM_PARSING_CLASSES") = kNumParsingClasses;
    m.attr("NUM_KEYPOINTS") = kNumKeypoints;
}
