#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ndr/gradcheck.hpp"
#include "ndr/render.hpp"

using namespace ndr;

namespace {

Camera<double> basic_camera() {
  Camera<double> cam;
  cam.intr = Intrinsics<double>{100, 100, 64, 64, 128, 128};
  cam.base.rot = Mat3<double>::Identity();
  cam.base.trans = Vec3<double>(0, 0, -2);
  return cam;
}

}  // namespace

TEST_CASE("pinhole ray directions") {
  Camera<double> cam = basic_camera();
  cam.intr.width = 256;  // room for the off-axis example pixel

  auto rays = generate_rays(cam, {{64, 64}, {164, 64}}, 0);
  CHECK((rays[0].dir - Vec3<double>(0, 0, 1)).norm() < 1e-12);
  Vec3<double> expect = Vec3<double>(1, 0, 1).normalized();
  CHECK((rays[1].dir - expect).norm() < 1e-12);

  // zero delta leaves the base pose untouched
  Camera<double> cam2 = cam;
  cam2.delta_rot.setZero();
  cam2.delta_trans.setZero();
  auto rays2 = generate_rays(cam2, {{10, 20}}, 0);
  auto base = generate_rays(cam, {{10, 20}}, 0);
  CHECK((rays2[0].dir - base[0].dir).norm() == 0.0);
  CHECK((rays2[0].origin - base[0].origin).norm() == 0.0);

  CHECK_THROWS(generate_rays(cam, {{256, 0}}, 0));
}

TEST_CASE("back projection and the projection round trip") {
  Camera<double> cam = basic_camera();
  cam.base.trans.setZero();

  Vec3<double> on_axis = cam.back_project(64, 64, 2.5);
  CHECK((on_axis - Vec3<double>(0, 0, 2.5)).norm() < 1e-12);

  Vec3<double> p = cam.back_project(164, 64, 1.0);
  CHECK((p - Vec3<double>(1, 0, 1)).norm() < 1e-12);

  Camera<double> moved = basic_camera();
  moved.delta_rot = Vec3<double>(0.03, -0.02, 0.05);
  moved.delta_trans = Vec3<double>(0.1, 0.2, -0.05);
  for (auto [px, py, z] : {std::tuple{12.0, 88.0, 1.7}, {100.0, 30.0, 2.4}}) {
    Vec3<double> proj = moved.project(moved.back_project(px, py, z));
    CHECK(std::abs(proj.x() - px) < 1e-6);
    CHECK(std::abs(proj.y() - py) < 1e-6);
    CHECK(std::abs(proj.z() - z) < 1e-9);
  }

  CHECK_THROWS(cam.back_project(64, 64, 0.0));
}

TEST_CASE("sample count, ordering, and empty-field spread") {
  Camera<double> cam = basic_camera();
  auto rays = generate_rays(cam, {{64, 64}, {80, 50}}, 0);
  SampleConfig cfg;
  REQUIRE(cfg.total() == 128);

  Rng rng(3);
  auto empty = [](const Mat<double>& p) {
    return Mat<double>(Mat<double>::Constant(1, p.cols(), 10.0));
  };
  Mat<double> t = sample_rays(rays, cfg, empty, rng);
  REQUIRE(t.rows() == 128);
  REQUIRE(t.cols() == 2);
  for (int j = 0; j < 2; ++j) {
    for (int i = 1; i < 128; ++i) CHECK(t(i, j) >= t(i - 1, j));
    CHECK(t(0, j) >= rays[j].s_near);
    CHECK(t(127, j) <= rays[j].s_far);
    // empty field: samples stay near-uniform across the band
    double span = rays[j].s_far - rays[j].s_near;
    std::array<int, 4> quarter{0, 0, 0, 0};
    for (int i = 0; i < 128; ++i) {
      int q = std::min(3, static_cast<int>((t(i, j) - rays[j].s_near) / span * 4));
      quarter[static_cast<size_t>(q)]++;
    }
    for (int c : quarter) CHECK(c >= 20);
  }
}

TEST_CASE("importance samples concentrate at an opaque plane") {
  Camera<double> cam = basic_camera();
  auto rays = generate_rays(cam, {{64, 64}}, 0);
  SampleConfig cfg;
  Rng rng(9);
  // plane z = 0.2 crossed mid-band; ray parameter of the crossing is 2.2
  auto plane = [](const Mat<double>& p) {
    return Mat<double>((0.2 - p.row(2).array()).matrix());
  };
  Mat<double> t = sample_rays(rays, cfg, plane, rng);

  double star = 2.2;
  double interval = (rays[0].s_far - rays[0].s_near) / cfg.n_stratified;
  int close = 0;
  for (int i = 0; i < t.rows(); ++i)
    if (std::abs(t(i, 0) - star) <= 3 * interval) close++;
  // 64 of the 128 samples are importance draws; at least 60% of them close
  CHECK(close >= static_cast<int>(0.6 * 64));
}

TEST_CASE("sdf-to-alpha values") {
  Mat<double> d(2, 1);

  d << 0.3, 0.3;
  CHECK(alpha_from_sdf(d, 10.0)(0, 0) == 0.0);

  d << 0.1, -0.1;
  double phi1 = 1.0 / (1.0 + std::exp(-1.0));
  double expect = (phi1 - (1.0 - phi1)) / phi1;
  CHECK(alpha_from_sdf(d, 10.0)(0, 0) == doctest::Approx(expect).epsilon(1e-10));
  CHECK(alpha_from_sdf(d, 10.0)(0, 0) == doctest::Approx(0.6322).epsilon(1e-3));

  // hard-surface limit and the underflow side
  CHECK(alpha_from_sdf(d, 1e6)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  d << 500.0, 400.0;
  double a = alpha_from_sdf(d, 10.0)(0, 0);
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);

  // increasing SDF can only close the interval
  d << -0.1, 0.1;
  CHECK(alpha_from_sdf(d, 10.0)(0, 0) == 0.0);
}

TEST_CASE("tape integration matches the raw helpers and hand cases") {
  int k = 6, n = 2;
  Mat<double> t(k, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < k; ++i) t(i, j) = 1.0 + 0.2 * i + 0.01 * j;

  Rng rng(17);
  Mat<double> d_flat(1, k * n);
  for (int i = 0; i < k * n; ++i) d_flat(0, i) = rng.uniform(-0.5, 0.5);
  Mat<double> colors(3, k * n);
  for (Eigen::Index i = 0; i < colors.size(); ++i)
    colors.data()[i] = rng.uniform(0.0, 1.0);
  double s = 15.0;

  ad::Tape<double> tape;
  auto out = render_ad::integrate_sdf(
      tape, tape.constant(d_flat), tape.constant(colors), t,
      tape.constant(Mat<double>::Constant(1, 1, s)));

  for (int j = 0; j < n; ++j) {
    Mat<double> d = Eigen::Map<const Mat<double>>(d_flat.data() + j * k, k, 1);
    Mat<double> alpha = alpha_from_sdf(d, s);
    Mat<double> w = weights_from_alpha(alpha);
    CHECK((out.alpha.value().col(j) - alpha.col(0)).cwiseAbs().maxCoeff() <
          1e-12);
    double depth = 0, mask = 0;
    Vec3<double> c = Vec3<double>::Zero();
    for (int i = 0; i < k - 1; ++i) {
      depth += w(i, 0) * (t(i, j) + t(i + 1, j)) / 2;
      mask += w(i, 0);
      c += w(i, 0) * colors.col(j * k + i);
    }
    CHECK(out.depth.value()(0, j) == doctest::Approx(depth).epsilon(1e-12));
    CHECK(out.mask.value()(0, j) == doctest::Approx(mask).epsilon(1e-12));
    CHECK((out.color.value().col(j) - c).cwiseAbs().maxCoeff() < 1e-12);

    // invariants: transmittance non-increasing from 1, bounded mass
    CHECK(out.trans.value()(0, j) == doctest::Approx(1.0));
    for (int i = 1; i < k - 1; ++i)
      CHECK(out.trans.value()(i, j) <= out.trans.value()(i - 1, j) + 1e-15);
    CHECK(mask <= 1.0 + 1e-12);
    CHECK(mask >= 0.0);
  }
}

TEST_CASE("degenerate integration cases") {
  int k = 8;
  Mat<double> t(k, 1);
  for (int i = 0; i < k; ++i) t(i, 0) = 1.0 + 0.25 * i;

  ad::Tape<double> tape;
  auto s_var = tape.constant(Mat<double>::Constant(1, 1, 50.0));
  Mat<double> colors = Mat<double>::Constant(3, k, 0.7);

  // all positive, far from zero: empty space
  Mat<double> d_empty = Mat<double>::Constant(1, k, 5.0);
  auto empty = render_ad::integrate_sdf(tape, tape.constant(d_empty),
                                        tape.constant(colors), t, s_var);
  CHECK(empty.mask.value()(0, 0) < 1e-9);
  CHECK(empty.depth.value()(0, 0) < 1e-9);
  CHECK(empty.color.value().cwiseAbs().maxCoeff() < 1e-9);

  // one sharp crossing: full opacity at the crossing interval
  Mat<double> d_wall(1, k);
  for (int i = 0; i < k; ++i) d_wall(0, i) = i < 4 ? 2.0 - i * 0.5 : -(i - 3) * 0.5;
  auto wall = render_ad::integrate_sdf(tape, tape.constant(d_wall),
                                       tape.constant(colors), t, s_var);
  CHECK(wall.mask.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  // the linear crossing sits exactly at the interval midpoint
  CHECK(wall.depth.value()(0, 0) ==
        doctest::Approx((t(3, 0) + t(4, 0)) / 2).epsilon(1e-2));
  CHECK(wall.color.value()(0, 0) == doctest::Approx(0.7).epsilon(1e-6));

  // equal colors: exact C = M * c even at partial opacity
  Mat<double> d_soft(1, k);
  for (int i = 0; i < k; ++i) d_soft(0, i) = 0.4 - 0.1 * i;
  auto soft_s = tape.constant(Mat<double>::Constant(1, 1, 3.0));
  auto soft = render_ad::integrate_sdf(tape, tape.constant(d_soft),
                                       tape.constant(colors), t, soft_s);
  CHECK(soft.color.value()(1, 0) ==
        doctest::Approx(0.7 * soft.mask.value()(0, 0)).epsilon(1e-12));
}

TEST_CASE("integration gradients match finite differences") {
  int k = 5;
  Mat<double> t(k, 1);
  for (int i = 0; i < k; ++i) t(i, 0) = 1.0 + 0.3 * i;
  Mat<double> colors(3, k);
  Rng rng(5);
  for (Eigen::Index i = 0; i < colors.size(); ++i)
    colors.data()[i] = rng.uniform(0.2, 0.8);

  Mat<double> d0(k, 1);
  for (int i = 0; i < k; ++i) d0(i, 0) = 0.8 - 0.35 * i;

  auto fn = [&](ad::Tape<double>& tape, ad::Var<double> d) {
    auto out = render_ad::integrate_sdf(
        tape, ad::reshape(d, 1, k), tape.constant(colors), t,
        tape.constant(Mat<double>::Constant(1, 1, 4.0)));
    return ad::add(ad::add(ad::sum_all(out.color), ad::sum_all(out.depth)),
                   ad::sum_all(out.mask));
  };
  auto rep = grad_check<double>(fn, d0, 1e-5, 1e-5);
  INFO(rep.str());
  CHECK(rep.passed);
}

TEST_CASE("analytic sphere depth on the center ray") {
  Camera<double> cam = basic_camera();
  auto rays = generate_rays(cam, {{64, 64}}, 0);
  SampleConfig cfg;
  Rng rng(23);
  auto sphere = [](const Mat<double>& p) {
    return Mat<double>(
        (p.colwise().norm().array() - 0.5).matrix());
  };
  Mat<double> t = sample_rays(rays, cfg, sphere, rng);

  int k = cfg.total();
  Mat<double> d(k, 1);
  for (int i = 0; i < k; ++i)
    d(i, 0) = (rays[0].origin + t(i, 0) * rays[0].dir).norm() - 0.5;

  ad::Tape<double> tape;
  Mat<double> d_flat = d.transpose();
  auto out = render_ad::integrate_sdf(
      tape, tape.constant(d_flat),
      tape.constant(Mat<double>::Constant(3, k, 0.5)), t,
      tape.constant(Mat<double>::Constant(1, 1, 400.0)));

  // widest interval near the crossing bounds the discretization error
  double cross = 1.5;
  double width = 0;
  for (int i = 0; i + 1 < k; ++i)
    if (t(i, 0) <= cross + 0.05 && t(i + 1, 0) >= cross - 0.05)
      width = std::max(width, t(i + 1, 0) - t(i, 0));
  CHECK(out.mask.value()(0, 0) > 0.99);
  CHECK(std::abs(out.depth.value()(0, 0) - cross) <= 2 * std::max(width, 1e-4));
}

TEST_CASE("rendering is invariant to a rigid motion of scene and camera") {
  SampleConfig cfg;
  Mat3<double> rot = euler_zyx(0.4, -0.3, 0.7);

  auto render_depth = [&](const Pose<double>& pose,
                          const Mat3<double>& world_rot) {
    Camera<double> cam = basic_camera();
    cam.base = pose;
    auto rays = generate_rays(cam, {{70, 60}}, 0);
    auto sdf = [&](const Mat<double>& p) {
      Mat<double> q = world_rot.transpose() * p;
      Mat<double> out(1, p.cols());
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        Vec3<double> v = q.col(j);
        v.z() *= 0.8;  // mild anisotropy so the test is not sphere-symmetric
        out(0, j) = v.norm() - 0.45;
      }
      return out;
    };
    Rng rng(31);
    Mat<double> t = sample_rays(rays, cfg, sdf, rng);
    int k = cfg.total();
    Mat<double> d(1, k);
    for (int i = 0; i < k; ++i)
      d(0, i) = sdf(Mat<double>(rays[0].origin + t(i, 0) * rays[0].dir))(0, 0);
    ad::Tape<double> tape;
    auto out = render_ad::integrate_sdf(
        tape, tape.constant(d), tape.constant(Mat<double>::Constant(3, k, 0.3)),
        t, tape.constant(Mat<double>::Constant(1, 1, 200.0)));
    return std::make_pair(out.depth.value()(0, 0), out.mask.value()(0, 0));
  };

  Pose<double> base;
  base.trans = Vec3<double>(0, 0, -2);
  auto [d0, m0] = render_depth(base, Mat3<double>::Identity());

  Pose<double> moved;
  moved.rot = rot * base.rot;
  moved.trans = rot * base.trans;
  auto [d1, m1] = render_depth(moved, rot);

  CHECK(std::abs(d0 - d1) < 1e-6);
  CHECK(std::abs(m0 - m1) < 1e-6);
}

TEST_CASE("full bundle render produces bounded, finite outputs") {
  FieldsConfig cfg;
  cfg.topo_dim = 2;
  cfg.deform_code_dim = 8;
  cfg.appear_code_dim = 8;
  cfg.geo_feature_dim = 8;
  cfg.block_hidden_layers = 1;
  cfg.block_hidden_width = 16;
  cfg.fq_hidden_layers = 1;
  cfg.fq_hidden_width = 16;
  cfg.fd_hidden_layers = 2;
  cfg.fd_hidden_width = 32;
  cfg.fc_hidden_layers = 1;
  cfg.fc_hidden_width = 16;
  cfg.pe_bands_block = 2;
  cfg.pe_bands_point = 2;
  cfg.pe_bands_hyper = 2;
  cfg.pe_bands_color = 2;

  ParameterStore<double> store;
  Rng rng(41);
  fields_init(store, cfg, 1, rng);
  render_init(store);
  // perturb the canonical nets only; blocks stay at the exact identity so the
  // deformed view direction has a known value
  for (auto& [name, e] : store.entries())
    for (Eigen::Index i = 0; i < e.value.size(); ++i)
      if (name != kLogSScaleName && name.rfind("fh.", 0) != 0)
        e.value.data()[i] += rng.normal() * 0.05;

  Camera<double> cam = basic_camera();
  auto rays = generate_rays(cam, {{64, 64}, {30, 90}, {127, 0}}, 0);
  int n = 3, k = 16;
  Mat<double> t(k, n);
  for (int j = 0; j < n; ++j) {
    auto [s0, s1] = rays[j].hits_bound
                        ? std::make_pair(rays[j].s_near, rays[j].s_far)
                        : miss_band(rays[j]);
    for (int i = 0; i < k; ++i)
      t(i, j) = s0 + (s1 - s0) * (i + 0.5) / k;
  }
  Mat<double> origin(3, n), dir(3, n);
  for (int j = 0; j < n; ++j) {
    origin.col(j) = rays[j].origin;
    dir.col(j) = rays[j].dir;
  }

  EncodingSchedule pe2{2, 2.0};
  ad::Tape<double> tape;
  auto res = render_ad::render_bundle(
      tape, store, cfg, pe2, pe2, pe2, pe2, tape.constant(origin),
      tape.constant(dir), t,
      store.use(tape, detail::deform_code_name(0)),
      store.use(tape, detail::appear_code_name(0)));

  REQUIRE(res.ray.color.rows() == 3);
  REQUIRE(res.ray.color.cols() == n);
  CHECK(res.ray.mask.value().minCoeff() >= 0.0);
  CHECK(res.ray.mask.value().maxCoeff() <= 1.0 + 1e-12);
  CHECK(res.ray.color.value().allFinite());
  CHECK(res.ray.depth.value().allFinite());
  CHECK(res.sdf.value().allFinite());
  CHECK(res.normal_obs.value().allFinite());
  CHECK(res.view_canon.value().allFinite());

  // identity deformation: the deformed view direction is the ray direction
  CHECK((res.view_canon.value() - ad::rep_each_col(tape.constant(dir), k).value())
            .cwiseAbs()
            .maxCoeff() < 1e-9);
  store.clear_bindings();
}
