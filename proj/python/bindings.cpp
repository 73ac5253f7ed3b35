#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "meshcorr/camera.hpp"
#include "meshcorr/datagen.hpp"
#include "meshcorr/io.hpp"
#include "meshcorr/losses.hpp"
#include "meshcorr/mesh.hpp"
#include "meshcorr/metrics.hpp"
#include "meshcorr/network.hpp"
#include "meshcorr/rasterizer.hpp"
#include "meshcorr/warp.hpp"

namespace py = pybind11;
using namespace meshcorr;

namespace {

ImageF to_image(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d float array");
  ImageF img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.data(), a.data(), img.size() * sizeof(float));
  return img;
}

ImageU8 to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d uint8 array");
  ImageU8 img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.data(), a.data(), img.size());
  return img;
}

ImageU64 to_ids(const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d uint64 array");
  ImageU64 img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.data(), a.data(), img.size() * sizeof(std::uint64_t));
  return img;
}

ImageV2 to_coords(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 2)
    throw std::invalid_argument("expected an (H, W, 2) float array");
  ImageV2 img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.data(), a.data(), img.size() * sizeof(Pix2));
  return img;
}

template <typename T>
py::array from_image(const Image<T>& img) {
  py::array_t<T> a({img.height(), img.width()});
  std::memcpy(a.mutable_data(), img.data(), img.size() * sizeof(T));
  return a;
}

py::array from_coords(const ImageV2& img) {
  py::array_t<float> a({img.height(), img.width(), 2});
  std::memcpy(a.mutable_data(), img.data(), img.size() * sizeof(Pix2));
  return a;
}

RigidTransform to_transform(const py::array_t<double, py::array::c_style | py::array::forcecast>& rotation,
                            const py::array_t<double, py::array::c_style | py::array::forcecast>& translation) {
  if (rotation.ndim() != 2 || rotation.shape(0) != 3 || rotation.shape(1) != 3)
    throw std::invalid_argument("rotation must be 3x3");
  if (translation.ndim() != 1 || translation.shape(0) != 3)
    throw std::invalid_argument("translation must have 3 entries");
  RigidTransform t;
  std::memcpy(t.rotation.m.data(), rotation.data(), 9 * sizeof(double));
  t.translation = {translation.at(0), translation.at(1), translation.at(2)};
  return t;
}

TriangleMesh to_mesh(const py::array_t<double, py::array::c_style | py::array::forcecast>& vertices,
                     const py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>& triangles) {
  if (vertices.ndim() != 2 || vertices.shape(1) != 3)
    throw std::invalid_argument("vertices must be (N, 3)");
  if (triangles.ndim() != 2 || triangles.shape(1) != 3)
    throw std::invalid_argument("triangles must be (M, 3)");
  std::vector<Vec3> vs(static_cast<std::size_t>(vertices.shape(0)));
  for (py::ssize_t i = 0; i < vertices.shape(0); ++i)
    vs[static_cast<std::size_t>(i)] = {vertices.at(i, 0), vertices.at(i, 1), vertices.at(i, 2)};
  std::vector<std::array<std::uint32_t, 3>> ts(static_cast<std::size_t>(triangles.shape(0)));
  for (py::ssize_t i = 0; i < triangles.shape(0); ++i)
    ts[static_cast<std::size_t>(i)] = {triangles.at(i, 0), triangles.at(i, 1), triangles.at(i, 2)};
  return make_mesh(std::move(vs), std::move(ts));
}

py::dict stack_to_dict(const MeshFeatureStack& stack) {
  py::dict d;
  d["inverse_depth"] = from_image(stack.inverse_depth);
  d["normal_x"] = from_image(stack.normal_x);
  d["normal_y"] = from_image(stack.normal_y);
  d["normal_z"] = from_image(stack.normal_z);
  d["area"] = from_image(stack.area);
  d["edge_ratio"] = from_image(stack.edge_ratio);
  d["cam_angle"] = from_image(stack.cam_angle);
  d["triangle_id"] = from_image(stack.triangle_id);
  d["valid"] = from_image(stack.valid);
  return d;
}

}  // namespace

PYBIND11_MODULE(_meshcorr, m) {
  m.doc() = "mesh-view correction core";

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
             Intrinsics k{fx, fy, cx, cy, width, height};
             k.validate();
             return k;
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"),
           py::arg("height"))
      .def_readonly("fx", &Intrinsics::fx)
      .def_readonly("fy", &Intrinsics::fy)
      .def_readonly("cx", &Intrinsics::cx)
      .def_readonly("cy", &Intrinsics::cy)
      .def_readonly("width", &Intrinsics::width)
      .def_readonly("height", &Intrinsics::height);

  m.def("lift_intrinsics", [](const Intrinsics& k) {
    const Mat4 kh = lift_intrinsics(k);
    py::array_t<double> out({4, 4});
    std::memcpy(out.mutable_data(), kh.m.data(), 16 * sizeof(double));
    return out;
  });

  m.def(
      "forward_warp_point",
      [](double u, double v, double d, const Intrinsics& k, py::array_t<double> rotation,
         py::array_t<double> translation, double eps) {
        const RigidTransform t = to_transform(rotation, translation);
        const HomographyLift f = HomographyLift::from_transform(k, t);
        const WarpedPoint p = forward_warp_point({u, v, 1.0, d}, f, eps);
        return py::make_tuple(p.pixel.x, p.pixel.y, p.inverse_depth, p.front_of_camera);
      },
      py::arg("u"), py::arg("v"), py::arg("d"), py::arg("k"), py::arg("rotation"),
      py::arg("translation"), py::arg("eps") = kWarpEpsilon);

  m.def("triangle_id", [](py::array_t<double> v0, py::array_t<double> v1, py::array_t<double> v2) {
    auto vec = [](py::array_t<double>& a) { return Vec3{a.at(0), a.at(1), a.at(2)}; };
    return triangle_id(vec(v0), vec(v1), vec(v2));
  });

  m.def(
      "rasterize",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> vertices,
         py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast> triangles,
         const Intrinsics& k, py::array_t<double> rotation, py::array_t<double> translation) {
        const TriangleMesh mesh = to_mesh(vertices, triangles);
        return stack_to_dict(rasterize(mesh, k, to_transform(rotation, translation)));
      },
      py::arg("vertices"), py::arg("triangles"), py::arg("k"), py::arg("rotation"),
      py::arg("translation"));

  m.def(
      "reproject",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> d_t,
         py::array_t<double> rotation, py::array_t<double> translation, const Intrinsics& k,
         double eps) {
        const Reprojection r = reproject(to_image(d_t), to_transform(rotation, translation), k, eps);
        return py::make_tuple(from_image(r.d_nt), from_coords(r.sample_coords),
                              from_image(r.in_bounds));
      },
      py::arg("d_t"), py::arg("rotation"), py::arg("translation"), py::arg("k"),
      py::arg("eps") = kWarpEpsilon);

  m.def("sample_bilinear",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> image,
           py::array_t<float, py::array::c_style | py::array::forcecast> coords,
           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> in_bounds) {
          return from_image(sample_bilinear(to_image(image), to_coords(coords), to_mask(in_bounds)));
        });

  m.def("occlusion_mask",
        [](py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast> id_t,
           py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast> id_n,
           py::array_t<float, py::array::c_style | py::array::forcecast> coords,
           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> in_bounds) {
          return from_image(occlusion_mask(to_ids(id_t), to_ids(id_n), to_coords(coords),
                                           to_mask(in_bounds)));
        });

  m.def("berhu", &berhu, py::arg("x"), py::arg("c"));

  m.def("edge_weight_map",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> g,
           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> valid, double w_min,
           double w_max) {
          WeightMapParams params;
          params.w_min = w_min;
          params.w_max = w_max;
          return from_image(edge_weight_map(to_image(g), to_mask(valid), params));
        },
        py::arg("g"), py::arg("valid"), py::arg("w_min") = 0.1, py::arg("w_max") = 5.0);

  m.def("thresholded_accuracy",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> d_star,
           py::array_t<float, py::array::c_style | py::array::forcecast> d_hq,
           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> valid, double thr) {
          return thresholded_accuracy(to_image(d_star), to_image(d_hq), to_mask(valid), thr);
        });

  m.def("imae_irmse",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> d_star,
           py::array_t<float, py::array::c_style | py::array::forcecast> d_hq,
           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> valid) {
          const ImaeIrmse r = imae_irmse(to_image(d_star), to_image(d_hq), to_mask(valid));
          return py::make_tuple(r.imae, r.irmse);
        });

  py::class_<CorrectionNetF>(m, "CorrectionNet")
      .def(py::init([](int multiplier, int height, int width, std::uint64_t seed) {
             NetConfig config{multiplier, 7, height, width, seed};
             CorrectionNetF net(config);
             net.initialize_he(seed);
             return net;
           }),
           py::arg("multiplier") = 8, py::arg("height") = 96, py::arg("width") = 288,
           py::arg("seed") = 42)
      .def_property_readonly("param_count", &CorrectionNetF::param_count)
      .def_property_readonly("spec_digest", &CorrectionNetF::spec_digest)
      .def("zero_params",
           [](CorrectionNetF& net) {
             std::vector<float> zeros(net.param_count(), 0.0f);
             net.set_params(zeros);
           })
      .def("forward",
           [](const CorrectionNetF& net,
              py::array_t<float, py::array::c_style | py::array::forcecast> input) {
             if (input.ndim() != 3) throw std::invalid_argument("input must be (C, H, W)");
             Tensor<float> x(static_cast<int>(input.shape(0)), static_cast<int>(input.shape(1)),
                             static_cast<int>(input.shape(2)));
             std::memcpy(x.v.data(), input.data(), x.numel() * sizeof(float));
             NetCache<float> cache;
             net.forward(x, cache);
             const NetOutput out = CorrectionNetF::split_output(cache);
             return py::make_tuple(from_image(out.g_star), from_image(out.attention));
           })
      .def("save",
           [](const CorrectionNetF& net, const std::string& path) {
             save_checkpoint(path, net, nullptr, 0);
           })
      .def("load", [](CorrectionNetF& net, const std::string& path) {
        load_checkpoint(path, net, nullptr);
      });

  m.def("load_obj", [](const std::string& path) {
    const TriangleMesh mesh = load_obj(path);
    py::array_t<double> vs({static_cast<py::ssize_t>(mesh.vertices.size()), py::ssize_t(3)});
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      vs.mutable_at(py::ssize_t(i), 0) = mesh.vertices[i].x;
      vs.mutable_at(py::ssize_t(i), 1) = mesh.vertices[i].y;
      vs.mutable_at(py::ssize_t(i), 2) = mesh.vertices[i].z;
    }
    py::array_t<std::uint32_t> ts({static_cast<py::ssize_t>(mesh.triangles.size()), py::ssize_t(3)});
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
      for (int j = 0; j < 3; ++j) ts.mutable_at(py::ssize_t(i), j) = mesh.triangles[i][j];
    return py::make_tuple(vs, ts);
  });

  m.def("generate_scene", [](std::uint64_t seed, double extent, int boxes, int walls,
                             double resolution) {
    SceneSpec spec;
    spec.seed = seed;
    spec.extent = extent;
    spec.box_count = boxes;
    spec.wall_count = walls;
    spec.resolution = resolution;
    const TriangleMesh mesh = generate_scene(spec);
    py::array_t<double> vs({static_cast<py::ssize_t>(mesh.vertices.size()), py::ssize_t(3)});
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      vs.mutable_at(py::ssize_t(i), 0) = mesh.vertices[i].x;
      vs.mutable_at(py::ssize_t(i), 1) = mesh.vertices[i].y;
      vs.mutable_at(py::ssize_t(i), 2) = mesh.vertices[i].z;
    }
    py::array_t<std::uint32_t> ts({static_cast<py::ssize_t>(mesh.triangles.size()), py::ssize_t(3)});
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
      for (int j = 0; j < 3; ++j) ts.mutable_at(py::ssize_t(i), j) = mesh.triangles[i][j];
    return py::make_tuple(vs, ts);
  }, py::arg("seed") = 1, py::arg("extent") = 24.0, py::arg("boxes") = 6, py::arg("walls") = 3,
     py::arg("resolution") = 0.2);
}
