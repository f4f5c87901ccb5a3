// Python bindings: thin wrappers over the C++ library, arrays as numpy.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "gencad/cad_lang.hpp"
#include "gencad/error.hpp"
#include "gencad/geometry.hpp"
#include "gencad/imaging.hpp"
#include "gencad/mesh.hpp"
#include "gencad/metrics.hpp"
#include "gencad/pipeline/commands.hpp"
#include "gencad/pipeline/dataset.hpp"
#include "gencad/pipeline/train.hpp"
#include "gencad/retrieval.hpp"
#include "gencad/rng.hpp"

namespace py = pybind11;
using namespace gencad;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

U8Array encoded_to_array(const EncodedSequence& rows) {
  U8Array out({static_cast<py::ssize_t>(rows.size()), static_cast<py::ssize_t>(kRowWidth)});
  auto* p = out.mutable_data();
  for (const auto& r : rows) p = std::copy(r.begin(), r.end(), p);
  return out;
}

EncodedSequence array_to_encoded(const U8Array& a) {
  if (a.ndim() != 2 || a.shape(1) != kRowWidth) throw py::value_error("expected an N x 17 uint8 array");
  EncodedSequence rows(static_cast<std::size_t>(a.shape(0)));
  const auto* p = a.data();
  for (auto& r : rows) {
    std::copy(p, p + kRowWidth, r.begin());
    p += kRowWidth;
  }
  return rows;
}

PointCloud array_to_cloud(const F64Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("expected an N x 3 array");
  PointCloud c;
  c.points.resize(static_cast<std::size_t>(a.shape(0)));
  const auto* p = a.data();
  for (auto& v : c.points) {
    v = Vec3(p[0], p[1], p[2]);
    p += 3;
  }
  return c;
}

F64Array cloud_to_array(const PointCloud& c) {
  F64Array out({static_cast<py::ssize_t>(c.size()), py::ssize_t{3}});
  auto* p = out.mutable_data();
  for (const auto& v : c.points) {
    *p++ = v.x();
    *p++ = v.y();
    *p++ = v.z();
  }
  return out;
}

py::array_t<float> image_to_array(const GrayImage& img) {
  py::array_t<float> out({img.height, img.width});
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

GrayImage array_to_image(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D image");
  GrayImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

Config dict_to_config(const py::dict& d) {
  Config cfg;
  for (const auto& [k, v] : d) cfg.set(py::str(k), std::string(py::str(v)));
  return cfg;
}

CadSequence seq_from_json(const std::string& text) { return from_json(text); }

}  // namespace

PYBIND11_MODULE(_gencad, m) {
  m.doc() = "image-to-CAD pipeline: CAD language, geometry kernel, imaging, metrics, retrieval and training";

  auto base = py::register_exception<Error>(m, "GencadError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DependencyError>(m, "DependencyError", base.ptr());

  m.attr("NUM_LEVELS") = kNumLevels;
  m.attr("ROW_WIDTH") = kRowWidth;

  // cad-lang
  py::class_<CadSequence>(m, "CadSequence")
      .def_static("from_json", &seq_from_json, py::arg("text"))
      .def("to_json", [](const CadSequence& s) { return to_json(s); })
      .def("encode", [](const CadSequence& s) { return encoded_to_array(encode_sequence(s)); })
      .def_static("decode", [](const U8Array& a) { return decode_sequence(array_to_encoded(a)); }, py::arg("rows"))
      .def("validate",
           [](const CadSequence& s) {
             std::vector<std::string> out;
             for (const auto& v : validate(s).violations) out.push_back(v.rule + ": " + v.detail);
             return out;
           })
      .def("command_names",
           [](const CadSequence& s) {
             std::vector<std::string> out;
             for (const auto& c : s.commands) out.emplace_back(command_name(c.type));
             return out;
           })
      .def_readwrite("padded_len", &CadSequence::padded_len)
      .def("__len__", [](const CadSequence& s) { return s.commands.size(); })
      .def("__eq__", [](const CadSequence& a, const CadSequence& b) { return a == b; });

  m.def("quantize", [](double v, double lo, double hi) { return quantize(v, {lo, hi}); });
  m.def("dequantize", [](int level, double lo, double hi) { return dequantize(level, {lo, hi}); });

  m.def("check_program", [](const CadSequence& s, int resolution) {
    const auto st = check_program(s, resolution);
    py::dict d;
    d["grammar_ok"] = st.grammar_ok;
    d["solid_ok"] = st.solid_ok;
    d["valid"] = st.valid();
    d["detail"] = st.detail;
    return d;
  }, py::arg("seq"), py::arg("resolution") = kDefaultGridResolution);

  m.def("synth_program", [](std::uint64_t seed, int difficulty, int padded_len) {
    Rng rng(seed);
    return pipeline::synth_program(rng, difficulty, padded_len);
  }, py::arg("seed"), py::arg("difficulty") = 2, py::arg("padded_len") = kDefaultPaddedLength);

  // geometry-kernel
  py::class_<SolidModel>(m, "Solid")
      .def("sdf", [](const SolidModel& s, const F64Array& pts) {
        const auto c = array_to_cloud(pts);
        py::array_t<double> out(static_cast<py::ssize_t>(c.size()));
        auto* p = out.mutable_data();
        for (const auto& v : c.points) *p++ = s.sdf(v);
        return out;
      })
      .def("is_valid", [](const SolidModel& s, int r) { return is_valid(s, r); }, py::arg("resolution") = kDefaultGridResolution)
      .def("volume", [](const SolidModel& s, std::size_t n, std::uint64_t seed) {
        const auto v = volume_estimate(s, n, seed);
        return py::make_tuple(v.volume, v.std_error);
      }, py::arg("samples") = 100000, py::arg("seed") = 0)
      .def("mesh", [](const SolidModel& s, int r) {
        const auto mesh = extract_mesh(s, r);
        F64Array verts({static_cast<py::ssize_t>(mesh.vertices.size()), py::ssize_t{3}});
        auto* p = verts.mutable_data();
        for (const auto& v : mesh.vertices) {
          *p++ = v.x();
          *p++ = v.y();
          *p++ = v.z();
        }
        py::array_t<int> tris({static_cast<py::ssize_t>(mesh.triangles.size()), py::ssize_t{3}});
        auto* t = tris.mutable_data();
        for (const auto& tr : mesh.triangles) t = std::copy(tr.begin(), tr.end(), t);
        return py::make_tuple(verts, tris);
      }, py::arg("resolution") = kDefaultGridResolution)
      .def("sample_surface", [](const SolidModel& s, std::size_t n, std::uint64_t seed, int r) {
        return cloud_to_array(sample_surface(s, n, seed, r));
      }, py::arg("count") = kDefaultPointCount, py::arg("seed") = 0, py::arg("resolution") = kDefaultGridResolution)
      .def("render", [](const SolidModel& s, int size) {
        RenderOptions o;
        o.size = size;
        return image_to_array(render_isometric(s, o));
      }, py::arg("size") = kRenderSize);

  m.def("execute", &execute, py::arg("seq"));

  // imaging
  m.def("make_sketch", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& img) {
    return image_to_array(make_sketch(array_to_image(img)));
  });
  m.def("load_pgm", [](const std::string& path) { return image_to_array(load_pgm(path)); });
  m.def("save_pgm", [](const std::string& path, const py::array_t<float, py::array::c_style | py::array::forcecast>& img) {
    save_pgm(path, array_to_image(img));
  });

  // metrics
  m.def("chamfer", [](const F64Array& x, const F64Array& y) { return chamfer(array_to_cloud(x), array_to_cloud(y)); });
  m.def("normalize_cloud", [](const F64Array& x) { return cloud_to_array(normalize(array_to_cloud(x))); });
  m.def("coverage", [](const MatrixXd& d) { return coverage(d); }, py::arg("d_gs"));
  m.def("mmd", [](const MatrixXd& d) { return mmd(d); }, py::arg("d_gs"));
  m.def("fid", [](const MatrixXd& s, const MatrixXd& g) { return fid(s, g).value; });
  m.def("jsd_histograms", &jsd_histograms);

  // retrieval
  m.def("eval_protocol", [](const RowMatrixXf& cad, const RowMatrixXf& image, int n_b, int repeats, std::uint64_t seed) {
    const auto r = eval_protocol(cad, image, n_b, repeats, seed);
    return py::make_tuple(r.mean, r.stddev);
  }, py::arg("cad"), py::arg("image"), py::arg("n_b"), py::arg("repeats"), py::arg("seed") = 0);

  // pipeline
  m.def("synth_dataset", [](const std::string& out, std::size_t count, std::uint64_t seed, int difficulty,
                            int padded_len, std::vector<double> ratios) {
    pipeline::SynthOptions so{count, seed, difficulty, padded_len};
    pipeline::SplitRatios sr;
    if (ratios.size() == 3) sr = {ratios[0], ratios[1], ratios[2]};
    else if (!ratios.empty()) throw py::value_error("ratios needs three values");
    return pipeline::synth_dataset(out, so, sr).file();
  }, py::arg("out"), py::arg("count") = 100, py::arg("seed") = 0, py::arg("difficulty") = 2,
     py::arg("padded_len") = kDefaultPaddedLength, py::arg("ratios") = std::vector<double>{});

  m.def("render_dataset", [](const std::string& manifest, int image_size) {
    auto mf = pipeline::DatasetManifest::load(manifest);
    pipeline::RenderDatasetOptions o;
    o.image_size = image_size;
    const auto s = pipeline::render_dataset(mf, o);
    return py::make_tuple(s.kept, s.dropped);
  }, py::arg("manifest"), py::arg("image_size") = kRenderSize);

  auto train = [](auto fn) {
    return [fn](const py::dict& cfg, const std::string& manifest, const std::string& run) {
      const auto r = fn(dict_to_config(cfg), pipeline::DatasetManifest::load(manifest), run);
      return py::make_tuple(r.end_step, r.losses, r.checkpoint);
    };
  };
  m.def("train_csr", train(&pipeline::train_csr), py::arg("config"), py::arg("manifest"), py::arg("run"));
  m.def("train_ccip", train(&pipeline::train_ccip), py::arg("config"), py::arg("manifest"), py::arg("run"));
  m.def("train_cdp", train(&pipeline::train_cdp), py::arg("config"), py::arg("manifest"), py::arg("run"));

  m.def("generate", [](const std::string& run, std::vector<std::string> images, const std::string& out,
                       int n_per_image, std::uint64_t seed, const std::string& prior) {
    pipeline::GenerateOptions o;
    o.run_dir = run;
    o.images = std::move(images);
    o.out_dir = out;
    o.n_per_image = n_per_image;
    o.seed = seed;
    o.prior = prior;
    const auto r = pipeline::generate_cmd(o);
    py::list items;
    for (const auto& it : r.items) {
      py::dict d;
      d["image"] = it.image;
      d["sample"] = it.sample;
      d["program"] = it.program;
      d["grammar_ok"] = it.status.grammar_ok;
      d["valid"] = it.status.valid();
      items.append(d);
    }
    return py::make_tuple(items, r.invalid_ratio);
  }, py::arg("run"), py::arg("images"), py::arg("out"), py::arg("n_per_image") = 1, py::arg("seed") = 0,
     py::arg("prior") = "diffusion");
}
