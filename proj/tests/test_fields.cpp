#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ndr/fields.hpp"
#include "ndr/gradcheck.hpp"

using namespace ndr;

namespace {

FieldsConfig small_config() {
  FieldsConfig cfg;
  cfg.topo_dim = 2;
  cfg.num_blocks = 3;
  cfg.deform_code_dim = 8;
  cfg.appear_code_dim = 8;
  cfg.geo_feature_dim = 8;
  cfg.block_hidden_layers = 1;
  cfg.block_hidden_width = 16;
  cfg.fq_hidden_layers = 2;
  cfg.fq_hidden_width = 16;
  cfg.fd_hidden_layers = 2;
  cfg.fd_hidden_width = 32;
  cfg.fc_hidden_layers = 2;
  cfg.fc_hidden_width = 16;
  cfg.pe_bands_block = 2;
  cfg.pe_bands_point = 3;
  cfg.pe_bands_hyper = 3;
  cfg.pe_bands_color = 2;
  return cfg;
}

EncodingSchedule open_sched(int bands) {
  return EncodingSchedule{bands, static_cast<double>(bands)};
}

// Non-identity deformation: perturb every parameter, keeping rotation raw
// outputs small enough that tanh stays well-conditioned.
template <class T>
void randomize(ParameterStore<T>& store, Rng& rng, double scale) {
  for (auto& [name, e] : store.entries())
    for (Eigen::Index i = 0; i < e.value.size(); ++i)
      e.value.data()[i] += static_cast<T>(rng.normal() * scale);
}

}  // namespace

TEST_CASE("zero-initialized deformation is the exact identity") {
  FieldsConfig cfg = small_config();
  ParameterStore<double> store;
  Rng rng(7);
  fields_init(store, cfg, 2, rng);

  EncodingSchedule pe = open_sched(cfg.pe_bands_block);
  Mat<double> p(3, 5);
  for (int i = 0; i < 15; ++i) p.data()[i] = rng.uniform(-1.0, 1.0);
  Vec<double> code = store.at(detail::deform_code_name(0)).value.col(0);

  Mat<double> out = fields_raw::hmap_forward(store, cfg, p, code, pe);
  CHECK((out - p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hand-built single block matches the worked example") {
  // One block on the z axis. Axis net outputs the constant 0.1, rigid net the
  // raw angle atanh(1/2) (so theta = pi/2) and zero translation. Then
  // (1, 0, 0) -> (0, 1, 0.1).
  FieldsConfig cfg = small_config();
  cfg.num_blocks = 1;
  REQUIRE(cfg.block_axis(0) == 2);

  ParameterStore<double> store;
  Rng rng(1);
  fields_init(store, cfg, 1, rng);
  // zero all block weights, then set final biases
  for (const std::string& n : store.names_with_prefix("fh."))
    store.at(n).value.setZero();
  store.at("fh.b0.a.b1").value(0, 0) = 0.1;
  store.at("fh.b0.b.b1").value(0, 0) = std::atanh(0.5);

  EncodingSchedule pe = open_sched(cfg.pe_bands_block);
  Vec<double> code = Vec<double>::Zero(cfg.deform_code_dim);
  Mat<double> p(3, 1);
  p << 1, 0, 0;
  Mat<double> out = fields_raw::block_forward(store, cfg, 0, p, code, pe);
  CHECK(out(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out(2, 0) == doctest::Approx(0.1).epsilon(1e-12));

  Mat<double> back = fields_raw::block_inverse(store, cfg, 0, out, code, pe);
  CHECK((back - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward-inverse round trip stays within 1e-9") {
  FieldsConfig cfg = small_config();
  ParameterStore<double> store;
  Rng rng(11);
  fields_init(store, cfg, 3, rng);
  randomize(store, rng, 0.25);

  EncodingSchedule pe = open_sched(cfg.pe_bands_block);
  double worst = 0;
  for (int f = 0; f < 3; ++f) {
    Vec<double> code = store.at(detail::deform_code_name(f)).value.col(0);
    Mat<double> p(3, 64);
    for (Eigen::Index i = 0; i < p.size(); ++i)
      p.data()[i] = rng.uniform(-1.0, 1.0);
    Mat<double> fwd = fields_raw::hmap_forward(store, cfg, p, code, pe);
    Mat<double> back = fields_raw::hmap_inverse(store, cfg, fwd, code, pe);
    worst = std::max(worst, (back - p).cwiseAbs().maxCoeff());
    Mat<double> fwd2 = fields_raw::hmap_forward(store, cfg, back, code, pe);
    worst = std::max(worst, (fwd2 - fwd).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("frame correspondences compose along paths") {
  FieldsConfig cfg = small_config();
  ParameterStore<double> store;
  Rng rng(23);
  fields_init(store, cfg, 3, rng);
  randomize(store, rng, 0.25);

  EncodingSchedule pe = open_sched(cfg.pe_bands_block);
  Vec<double> c0 = store.at(detail::deform_code_name(0)).value.col(0);
  Vec<double> c1 = store.at(detail::deform_code_name(1)).value.col(0);
  Vec<double> c2 = store.at(detail::deform_code_name(2)).value.col(0);

  Mat<double> p(3, 32);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p.data()[i] = rng.uniform(-0.8, 0.8);

  Mat<double> via = fields_raw::correspondence(
      store, cfg, fields_raw::correspondence(store, cfg, p, c0, c1, pe), c1, c2,
      pe);
  Mat<double> direct = fields_raw::correspondence(store, cfg, p, c0, c2, pe);
  CHECK((via - direct).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("tape and raw field evaluations agree") {
  FieldsConfig cfg = small_config();
  ParameterStore<double> store;
  Rng rng(5);
  fields_init(store, cfg, 1, rng);
  randomize(store, rng, 0.2);

  EncodingSchedule peb = open_sched(cfg.pe_bands_block);
  EncodingSchedule pep = open_sched(cfg.pe_bands_point);
  EncodingSchedule peh = open_sched(cfg.pe_bands_hyper);
  Vec<double> code = store.at(detail::deform_code_name(0)).value.col(0);

  Mat<double> p(3, 6);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p.data()[i] = rng.uniform(-0.7, 0.7);

  ad::Tape<double> tape;
  ad::Var<double> pv = tape.constant(p);
  ad::Var<double> code_rep =
      ad::rep_cols(store.use(tape, detail::deform_code_name(0)),
                   static_cast<int>(p.cols()));
  ad::Var<double> fwd = fields_ad::hmap_forward(tape, store, cfg, pv, code_rep, peb);
  ad::Var<double> inv = fields_ad::hmap_inverse(tape, store, cfg, pv, code_rep, peb);
  ad::Var<double> q = fields_ad::topo_coords(tape, store, cfg, pv, code_rep, pep);
  ad::Var<double> x = ad::vconcat({fwd, q});
  fields_ad::SdfOut<double> sd = fields_ad::sdf_eval(tape, store, cfg, x, peh);

  CHECK((fwd.value() - fields_raw::hmap_forward(store, cfg, p, code, peb))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((inv.value() - fields_raw::hmap_inverse(store, cfg, p, code, peb))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((q.value() - fields_raw::topo_coords(store, cfg, p, code, pep))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((sd.d.value() -
         fields_raw::sdf_at_observed(store, cfg, p, code, peb, pep, peh))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  store.clear_bindings();
}

TEST_CASE("deformation Jacobian matches central differences") {
  FieldsConfig cfg = small_config();
  ParameterStore<double> store;
  Rng rng(31);
  fields_init(store, cfg, 1, rng);
  randomize(store, rng, 0.25);

  EncodingSchedule pe = open_sched(cfg.pe_bands_block);
  Vec<double> code = store.at(detail::deform_code_name(0)).value.col(0);
  int n = 4;
  Mat<double> p(3, n);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p.data()[i] = rng.uniform(-0.6, 0.6);

  ad::Tape<double> tape;
  ad::Var<double> pv = tape.leaf(p);
  ad::Var<double> code_rep =
      ad::rep_cols(store.use(tape, detail::deform_code_name(0)), n);
  ad::Var<double> fwd = fields_ad::hmap_forward(tape, store, cfg, pv, code_rep, pe);
  auto jr = fields_ad::jacobian_rows(tape, fwd, pv);

  double h = 1e-5, worst = 0;
  for (int c = 0; c < n; ++c) {
    for (int k = 0; k < 3; ++k) {
      Mat<double> pp = p, pm = p;
      pp(k, c) += h;
      pm(k, c) -= h;
      Vec3<double> fd = (fields_raw::hmap_forward(store, cfg, pp, code, pe).col(c) -
                         fields_raw::hmap_forward(store, cfg, pm, code, pe).col(c)) /
                        (2 * h);
      for (int r = 0; r < 3; ++r) {
        double an = jr[r].value()(k, c);
        double rel = std::abs(an - fd[r]) /
                     std::max({std::abs(an), std::abs(fd[r]), 1e-6});
        worst = std::max(worst, rel);
      }
    }
  }
  CHECK(worst < 1e-3);
  store.clear_bindings();
}

TEST_CASE("on-tape surface normal matches central differences") {
  FieldsConfig cfg = small_config();
  ParameterStore<double> store;
  Rng rng(41);
  fields_init(store, cfg, 1, rng);
  randomize(store, rng, 0.05);

  EncodingSchedule peb = open_sched(cfg.pe_bands_block);
  EncodingSchedule pep = open_sched(cfg.pe_bands_point);
  EncodingSchedule peh = open_sched(cfg.pe_bands_hyper);
  Vec<double> code = store.at(detail::deform_code_name(0)).value.col(0);
  int n = 4;
  Mat<double> p(3, n);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p.data()[i] = rng.uniform(-0.5, 0.5);

  ad::Tape<double> tape;
  ad::Var<double> pv = tape.leaf(p);
  ad::Var<double> code_rep =
      ad::rep_cols(store.use(tape, detail::deform_code_name(0)), n);
  ad::Var<double> fwd = fields_ad::hmap_forward(tape, store, cfg, pv, code_rep, peb);
  ad::Var<double> q = fields_ad::topo_coords(tape, store, cfg, pv, code_rep, pep);
  fields_ad::SdfOut<double> sd =
      fields_ad::sdf_eval(tape, store, cfg, ad::vconcat({fwd, q}), peh);
  ad::Var<double> normal = fields_ad::per_column_grad(tape, sd.d, pv);

  double h = 1e-5, worst = 0, worst_an = 0, worst_fd = 0;
  for (int c = 0; c < n; ++c) {
    for (int k = 0; k < 3; ++k) {
      Mat<double> pp = p, pm = p;
      pp(k, c) += h;
      pm(k, c) -= h;
      double fd =
          (fields_raw::sdf_at_observed(store, cfg, pp, code, peb, pep, peh)(0, c) -
           fields_raw::sdf_at_observed(store, cfg, pm, code, peb, pep, peh)(0, c)) /
          (2 * h);
      double an = normal.value()(k, c);
      double rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      if (rel > worst) {
        worst = rel;
        worst_an = an;
        worst_fd = fd;
      }
    }
  }
  CAPTURE(worst_an);
  CAPTURE(worst_fd);
  CHECK(worst < 1e-3);
  store.clear_bindings();
}

TEST_CASE("normal-dependent loss differentiates w.r.t. the frame code") {
  // Second order: the normal is itself a gradient; check d/dcode of
  // sum(normal^2) against central differences on the code entries.
  FieldsConfig cfg = small_config();
  ParameterStore<double> store;
  Rng rng(53);
  fields_init(store, cfg, 1, rng);
  randomize(store, rng, 0.25);

  EncodingSchedule peb = open_sched(cfg.pe_bands_block);
  EncodingSchedule pep = open_sched(cfg.pe_bands_point);
  EncodingSchedule peh = open_sched(cfg.pe_bands_hyper);
  const std::string cname = detail::deform_code_name(0);
  int n = 3;
  Mat<double> p(3, n);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p.data()[i] = rng.uniform(-0.5, 0.5);

  auto loss_at = [&]() {
    ad::Tape<double> tape;
    ad::Var<double> pv = tape.leaf(p);
    ad::Var<double> code_rep = ad::rep_cols(store.use(tape, cname), n);
    ad::Var<double> fwd =
        fields_ad::hmap_forward(tape, store, cfg, pv, code_rep, peb);
    ad::Var<double> q = fields_ad::topo_coords(tape, store, cfg, pv, code_rep, pep);
    fields_ad::SdfOut<double> sd =
        fields_ad::sdf_eval(tape, store, cfg, ad::vconcat({fwd, q}), peh);
    ad::Var<double> normal = fields_ad::per_column_grad(tape, sd.d, pv);
    return std::make_pair(ad::sum_all(ad::square(normal)), &tape);
  };

  // analytic gradient
  ad::Tape<double> tape;
  ad::Var<double> pv = tape.leaf(p);
  ad::Var<double> code_rep = ad::rep_cols(store.use(tape, cname), n);
  ad::Var<double> fwd = fields_ad::hmap_forward(tape, store, cfg, pv, code_rep, peb);
  ad::Var<double> q = fields_ad::topo_coords(tape, store, cfg, pv, code_rep, pep);
  fields_ad::SdfOut<double> sd =
      fields_ad::sdf_eval(tape, store, cfg, ad::vconcat({fwd, q}), peh);
  ad::Var<double> normal = fields_ad::per_column_grad(tape, sd.d, pv);
  ad::Var<double> loss = ad::sum_all(ad::square(normal));
  store.zero_grad();
  store.accumulate_grads(tape, loss);
  Mat<double> grad = store.at(cname).grad;
  store.clear_bindings();

  auto scalar_loss = [&]() {
    ad::Tape<double> t2;
    ad::Var<double> pv2 = t2.leaf(p);
    ad::Var<double> cr2 = ad::rep_cols(store.use(t2, cname), n);
    ad::Var<double> f2 = fields_ad::hmap_forward(t2, store, cfg, pv2, cr2, peb);
    ad::Var<double> q2 = fields_ad::topo_coords(t2, store, cfg, pv2, cr2, pep);
    fields_ad::SdfOut<double> s2 =
        fields_ad::sdf_eval(t2, store, cfg, ad::vconcat({f2, q2}), peh);
    ad::Var<double> n2 = fields_ad::per_column_grad(t2, s2.d, pv2);
    double v = ad::sum_all(ad::square(n2)).value()(0, 0);
    store.clear_bindings();
    return v;
  };

  double h = 1e-5, worst = 0;
  for (int k = 0; k < cfg.deform_code_dim; ++k) {
    double saved = store.at(cname).value(k, 0);
    store.at(cname).value(k, 0) = saved + h;
    double up = scalar_loss();
    store.at(cname).value(k, 0) = saved - h;
    double dn = scalar_loss();
    store.at(cname).value(k, 0) = saved;
    double fd = (up - dn) / (2 * h);
    double an = grad(k, 0);
    double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
    worst = std::max(worst, rel);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("color head is bounded and conditioned on every input") {
  FieldsConfig cfg = small_config();
  ParameterStore<double> store;
  Rng rng(67);
  fields_init(store, cfg, 1, rng);
  randomize(store, rng, 0.3);

  EncodingSchedule pec = open_sched(cfg.pe_bands_color);
  int n = 5;
  ad::Tape<double> tape;
  auto rand_const = [&](int r) {
    Mat<double> m(r, n);
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = rng.uniform(-1.0, 1.0);
    return tape.constant(m);
  };
  ad::Var<double> psi_rep =
      ad::rep_cols(store.use(tape, detail::appear_code_name(0)), n);
  ad::Var<double> c = fields_ad::color_eval(
      tape, store, cfg, rand_const(3), rand_const(3), rand_const(3),
      rand_const(cfg.geo_feature_dim), psi_rep, pec);
  REQUIRE(c.rows() == 3);
  REQUIRE(c.cols() == n);
  CHECK(c.value().minCoeff() > 0.0);
  CHECK(c.value().maxCoeff() < 1.0);
  store.clear_bindings();
}

TEST_CASE("paper-sized configuration has the expected interface widths") {
  FieldsConfig cfg;  // defaults
  CHECK(cfg.fd_spec().input == (3 + 2) * (1 + 2 * 6));
  CHECK(cfg.fd_spec().output == 257);
  CHECK(cfg.fd_spec().hidden_layers == 8);
  CHECK(cfg.fd_spec().hidden_width == 256);
  CHECK(cfg.fq_spec().hidden_layers == 7);
  CHECK(cfg.fq_spec().hidden_width == 64);
  CHECK(cfg.fc_spec().hidden_layers == 4);
  CHECK(cfg.fc_spec().hidden_width == 256);
  CHECK(cfg.deform_code_dim == 64);
  CHECK(cfg.appear_code_dim == 256);
  CHECK(cfg.num_blocks == 3);
  CHECK(cfg.block_axis(0) == 2);
  CHECK(cfg.block_axis(1) == 1);
  CHECK(cfg.block_axis(2) == 0);
}
