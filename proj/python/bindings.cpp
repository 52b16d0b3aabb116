#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "haanet/checkpoint.hpp"
#include "haanet/commands.hpp"
#include "haanet/haze.hpp"
#include "haanet/image_io.hpp"
#include "haanet/metrics.hpp"
#include "haanet/net.hpp"
#include "haanet/trainer.hpp"

namespace py = pybind11;
using namespace haanet;

namespace {

template <typename S>
using Array = py::array_t<S, py::array::c_style | py::array::forcecast>;

// Accepts (h,w), (c,h,w) or (n,c,h,w).
template <typename S>
Tensor<S> to_tensor(const Array<S>& a) {
  const py::buffer_info info = a.request();
  std::array<int, 4> dims{1, 1, 1, 1};
  if (info.ndim < 2 || info.ndim > 4) {
    throw std::invalid_argument("expected a 2-, 3- or 4-dimensional array");
  }
  for (py::ssize_t i = 0; i < info.ndim; ++i) {
    dims[4 - info.ndim + i] = static_cast<int>(info.shape[i]);
  }
  const S* p = static_cast<const S*>(info.ptr);
  Shape s{dims[0], dims[1], dims[2], dims[3]};
  return Tensor<S>(s, std::vector<S>(p, p + s.numel()));
}

template <typename S>
py::array_t<S> to_array(const Tensor<S>& t) {
  const Shape s = t.shape();
  py::array_t<S> out({s.n, s.c, s.h, s.w});
  std::copy(t.raw(), t.raw() + t.size(), out.mutable_data());
  return out;
}

py::dict pair_dict(const HazyPair<double>& p, double beta) {
  py::dict d;
  d["hazy"] = to_array(p.hazy);
  d["clean"] = to_array(p.clean);
  d["transmission"] = to_array(p.transmission);
  d["airlight"] = p.airlight;
  d["beta"] = beta;
  d["seed"] = p.seed;
  return d;
}

// Owns float weights for inference from Python.
struct Network {
  NetWeights<float> weights;

  py::array_t<float> dehaze(const Array<float>& hazy) {
    return to_array(haanet::dehaze(to_tensor(hazy), weights));
  }
  std::size_t parameter_count() { return weights.parameter_count(); }
  void save(const std::filesystem::path& path) { write_checkpoint(path, net_table(weights)); }
  std::vector<std::string> parameter_names() {
    std::vector<std::string> names;
    for (auto& [name, t] : weights.named_parameters()) names.push_back(name);
    return names;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Haze-aware attention dehazing network (C++ core)";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ImageIoError>(m, "ImageIoError", PyExc_OSError);

  py::class_<NetConfig>(m, "NetConfig")
      .def(py::init([](int base_channels, int num_haab, bool use_haam, bool use_mfem,
                       bool use_skfusion) {
             NetConfig c{base_channels, num_haab, use_haam, use_mfem, use_skfusion};
             c.validate();
             return c;
           }),
           py::arg("base_channels") = 64, py::arg("num_haab") = 4, py::arg("use_haam") = true,
           py::arg("use_mfem") = true, py::arg("use_skfusion") = true)
      .def_static("desk", &NetConfig::desk)
      .def_readwrite("base_channels", &NetConfig::base_channels)
      .def_readwrite("num_haab", &NetConfig::num_haab)
      .def_readwrite("use_haam", &NetConfig::use_haam)
      .def_readwrite("use_mfem", &NetConfig::use_mfem)
      .def_readwrite("use_skfusion", &NetConfig::use_skfusion)
      .def("__eq__", [](const NetConfig& a, const NetConfig& b) { return a == b; });

  py::class_<Network>(m, "Network")
      .def(py::init([](const NetConfig& config, std::uint64_t seed) {
             return Network{NetWeights<float>::init(config, seed)};
           }),
           py::arg("config"), py::arg("seed") = 0)
      .def_static(
          "load",
          [](const std::filesystem::path& path) {
            return Network{net_from_table<float>(read_checkpoint(path))};
          },
          py::arg("path"))
      .def_property_readonly("config", [](const Network& n) { return n.weights.config; })
      .def("dehaze", &Network::dehaze, py::arg("hazy"),
           "Dehaze float32 images shaped (3,h,w) or (n,3,h,w); h and w divisible by 4.")
      .def("parameter_count", &Network::parameter_count)
      .def("parameter_names", &Network::parameter_names)
      .def("save", &Network::save, py::arg("path"));

  m.def(
      "generate_pair",
      [](std::uint64_t seed, int size) {
        const SceneSpec<double> scene = generate_scene(seed, size);
        return pair_dict(synthesize(scene), scene.beta);
      },
      py::arg("seed"), py::arg("size"), "Procedural clean/hazy/transmission triplet.");
  m.def(
      "transmission",
      [](const Array<double>& depth, double beta) {
        return to_array(transmission(to_tensor(depth), beta));
      },
      py::arg("depth"), py::arg("beta"));
  m.def(
      "invert_exact",
      [](const Array<double>& hazy, const Array<double>& t, const Airlight& airlight,
         double floor) {
        return to_array(invert_exact(to_tensor(hazy), to_tensor(t), airlight, floor));
      },
      py::arg("hazy"), py::arg("transmission"), py::arg("airlight"),
      py::arg("t_floor") = kDefaultTransmissionFloor);

  m.def(
      "psnr", [](const Array<double>& a, const Array<double>& b) {
        return psnr(to_tensor(a), to_tensor(b));
      },
      py::arg("pred"), py::arg("target"));
  m.def(
      "ssim", [](const Array<double>& a, const Array<double>& b) {
        return ssim(to_tensor(a), to_tensor(b));
      },
      py::arg("pred"), py::arg("target"));

  m.def(
      "load_ppm", [](const std::filesystem::path& p) { return to_array(load_ppm(p)); },
      py::arg("path"));
  m.def(
      "save_ppm",
      [](const std::filesystem::path& p, const Array<float>& img) { save_ppm(p, to_tensor(img)); },
      py::arg("path"), py::arg("image"));

  m.def(
      "parse_train_config",
      [](const std::string& text) { return format_train_config(parse_train_config(text)); },
      py::arg("text"), "Validates a config and returns it with every default filled in.");
  m.def(
      "cosine_lr",
      [](int step, const std::string& config) { return cosine_lr(step, parse_train_config(config)); },
      py::arg("step"), py::arg("config") = "");

  m.def(
      "synth",
      [](std::uint64_t seed, int count, int size, const std::filesystem::path& out_dir) {
        std::ostringstream log;
        cmd_synth({seed, count, size, out_dir}, log);
        return log.str();
      },
      py::arg("seed"), py::arg("count"), py::arg("size"), py::arg("out_dir"));
  m.def(
      "train",
      [](const std::optional<std::filesystem::path>& config,
         const std::optional<std::filesystem::path>& data_dir, const std::filesystem::path& out) {
        std::ostringstream log;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = cmd_train({config, data_dir, std::nullopt, out}, log);
        }
        py::dict d;
        d["log"] = log.str();
        d["val_psnr"] = r.final_val.psnr_pred;
        d["val_psnr_hazy"] = r.final_val.psnr_hazy;
        d["val_ssim"] = r.final_val.ssim_pred;
        d["val_ssim_hazy"] = r.final_val.ssim_hazy;
        d["diverged"] = r.diverged;
        return d;
      },
      py::arg("config") = py::none(), py::arg("data_dir") = py::none(), py::arg("out"));
  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
         const std::filesystem::path& csv) {
        std::ostringstream log;
        py::list rows;
        for (const EvalRow& r : cmd_eval({checkpoint, data_dir, csv}, log)) {
          rows.append(py::make_tuple(r.pair_id, r.psnr_hazy, r.psnr_pred, r.ssim_hazy, r.ssim_pred));
        }
        return rows;
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("csv"));
  m.def(
      "gradcheck",
      [](const std::string& module) {
        py::list out;
        for (const GradcheckGroup& g : run_gradcheck(module).groups) {
          out.append(py::make_tuple(g.module, g.group, g.max_error, g.tolerance, g.passed()));
        }
        return out;
      },
      py::arg("module") = "all");
}
