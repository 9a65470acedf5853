#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "liteheart/distill.hpp"
#include "liteheart/losses.hpp"

using namespace liteheart;

namespace {

// Scalar-loop oracles: independent transliterations of the loss formulas,
// kept free of the implementation's code paths.
double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_sig(double s) {
  const double eps = 1e-7;
  return std::min(1.0 - eps, std::max(eps, s));
}

double kd_oracle(const Tensor<double>& ps, const Tensor<double>& pt, double tau) {
  const Index N = ps.dim(0), C = ps.dim(1);
  double acc = 0.0;
  for (Index i = 0; i < N; ++i) {
    for (Index c = 0; c < C; ++c) {
      const double st = sig(pt.at(i, c) / tau);
      const double ss = clamp_sig(sig(ps.at(i, c) / tau));
      acc += (1.0 - st) * std::log(clamp_sig(1.0 - sig(ps.at(i, c) / tau))) + st * std::log(ss);
    }
  }
  return -tau * tau / static_cast<double>(N * C) * acc;
}

double bce_oracle(const Tensor<double>& ps, const Tensor<double>& y) {
  const Index N = ps.dim(0), C = ps.dim(1);
  double acc = 0.0;
  for (Index i = 0; i < N; ++i)
    for (Index c = 0; c < C; ++c) {
      const double s = sig(ps.at(i, c));
      acc += (1.0 - y.at(i, c)) * std::log(clamp_sig(1.0 - s)) +
             y.at(i, c) * std::log(clamp_sig(s));
    }
  return -acc / static_cast<double>(N * C);
}

double disc_oracle(const std::vector<double>& pos, const std::vector<double>& neg) {
  double acc = 0.0;
  for (std::size_t n = 0; n < pos.size(); ++n)
    acc += std::log(clamp_sig(sig(pos[n]))) + std::log(clamp_sig(1.0 - sig(neg[n])));
  return -acc / static_cast<double>(pos.size());
}

Tensor<double> randn(std::vector<Index> shape, RandomEngine& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

/// Discriminator with the final layer zeroed: D(z, o) == 0 for all inputs.
template <class T>
Discriminator<T> zeroed_discriminator(Index f, Index c) {
  Discriminator<T> d(f, c, 16, 123);
  for (nn::Param<T>* p : d.params()) {
    if (p->name.rfind("disc.fc2", 0) == 0) p->value.zero();
  }
  return d;
}

}  // namespace

TEST_CASE("kd_loss: zero logits give ln 2 (tau 1) and 4 ln 2 (tau 2)") {
  Tensor<double> z({3, 4});
  CHECK(std::abs(kd_loss(z, z, 1.0) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(kd_loss(z, z, 2.0) - 4.0 * std::log(2.0)) < 1e-12);
}

TEST_CASE("kd_loss: matches the scalar-loop oracle on random logits") {
  RandomEngine rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor<double> ps = randn({2, 3}, rng, 2.0);
    const Tensor<double> pt = randn({2, 3}, rng, 2.0);
    const double tau = rng.uniform(0.5, 5.0);
    CHECK(std::abs(kd_loss(ps, pt, tau) - kd_oracle(ps, pt, tau)) < 1e-9);
  }
}

TEST_CASE("kd_loss: gradient matches central finite differences") {
  RandomEngine rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> ps = randn({2, 3}, rng, 1.5);
    const Tensor<double> pt = randn({2, 3}, rng, 1.5);
    const double tau = rng.uniform(0.5, 4.0);
    Tensor<double> grad;
    kd_loss(ps, pt, tau, &grad);
    for (Index i = 0; i < ps.numel(); ++i) {
      const double h = 1e-5, orig = ps[i];
      ps[i] = orig + h;
      const double fp = kd_loss(ps, pt, tau);
      ps[i] = orig - h;
      const double fm = kd_loss(ps, pt, tau);
      ps[i] = orig;
      const double numeric = (fp - fm) / (2 * h);
      const double denom = std::max({1.0, std::abs(numeric), std::abs(grad[i])});
      CHECK(std::abs(grad[i] - numeric) / denom < 1e-4);
    }
  }
}

TEST_CASE("kd_loss: minimized at p_s = p_t") {
  RandomEngine rng(3);
  const Tensor<double> pt = randn({2, 4}, rng, 1.0);
  Tensor<double> ps = pt;
  const double tau = 2.0;
  const double at_min = kd_loss(ps, pt, tau);
  for (Index i = 0; i < ps.numel(); ++i) {
    for (double delta : {0.1, -0.1}) {
      ps[i] = pt[i] + delta;
      CHECK(kd_loss(ps, pt, tau) > at_min);
      ps[i] = pt[i];
    }
  }
}

TEST_CASE("bce: saturated correct prediction is ~0, logit 0 is ln 2") {
  Tensor<double> ps({1, 1});
  Tensor<double> y({1, 1});
  ps[0] = 20.0;
  y[0] = 1.0;
  CHECK(bce_multilabel(ps, y) < 1e-6);

  RandomEngine rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> yr({2, 3});
    for (Index i = 0; i < yr.numel(); ++i) yr[i] = rng.uniform();
    Tensor<double> zero({2, 3});
    CHECK(std::abs(bce_multilabel(zero, yr) - std::log(2.0)) < 1e-12);
  }
}

TEST_CASE("bce: soft targets match the scalar-loop oracle") {
  Tensor<double> ps({1, 2});
  Tensor<double> y({1, 2});
  ps.at(0, 0) = 1.0;
  ps.at(0, 1) = -1.0;
  y.at(0, 0) = 0.75;
  y.at(0, 1) = 0.25;
  CHECK(std::abs(bce_multilabel(ps, y) - bce_oracle(ps, y)) < 1e-9);

  RandomEngine rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor<double> psr = randn({3, 4}, rng, 2.0);
    Tensor<double> yr({3, 4});
    for (Index i = 0; i < yr.numel(); ++i) yr[i] = rng.uniform();
    CHECK(std::abs(bce_multilabel(psr, yr) - bce_oracle(psr, yr)) < 1e-9);
  }
}

TEST_CASE("bce: gradient matches central finite differences") {
  RandomEngine rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> ps = randn({2, 3}, rng, 1.5);
    Tensor<double> y({2, 3});
    for (Index i = 0; i < y.numel(); ++i) y[i] = rng.uniform();
    Tensor<double> grad;
    bce_multilabel(ps, y, &grad);
    for (Index i = 0; i < ps.numel(); ++i) {
      const double h = 1e-5, orig = ps[i];
      ps[i] = orig + h;
      const double fp = bce_multilabel(ps, y);
      ps[i] = orig - h;
      const double fm = bce_multilabel(ps, y);
      ps[i] = orig;
      const double numeric = (fp - fm) / (2 * h);
      const double denom = std::max({1.0, std::abs(numeric), std::abs(grad[i])});
      CHECK(std::abs(grad[i] - numeric) / denom < 1e-4);
    }
  }
}

TEST_CASE("bce: rejects targets outside [0, 1]") {
  Tensor<double> ps({1, 1});
  Tensor<double> y({1, 1});
  y[0] = 1.5;
  CHECK_THROWS_AS(bce_multilabel(ps, y), std::invalid_argument);
}

TEST_CASE("discriminator_loss: D == 0 gives 2 ln 2") {
  auto disc = zeroed_discriminator<double>(6, 3);
  RandomEngine rng(7);
  const Tensor<double> z = randn({5, 6}, rng);
  const Tensor<double> o = randn({5, 3}, rng);
  CHECK(std::abs(discriminator_loss(z, o, disc) - 2.0 * std::log(2.0)) < 1e-12);
}

TEST_CASE("discriminator_loss: rejects N < 2") {
  auto disc = zeroed_discriminator<double>(4, 2);
  RandomEngine rng(8);
  const Tensor<double> z = randn({1, 4}, rng);
  const Tensor<double> o = randn({1, 2}, rng);
  CHECK_THROWS_AS(discriminator_loss(z, o, disc), std::invalid_argument);
}

TEST_CASE("discriminator_loss: stubbed logits match the scalar oracle") {
  // The loss kernel evaluated on fixed pos/neg logits (N = 2):
  // pos = {1.0, 2.0}, neg = {-0.5, 0.5}. The oracle evaluates
  // -1/2 [(log s(1) + log(1 - s(-0.5))) + (log s(2) + log(1 - s(0.5)))].
  const double oracle = disc_oracle({1.0, 2.0}, {-0.5, 0.5});
  CHECK(oracle == doctest::Approx(0.9441718334607044).epsilon(1e-9));

  // Realize those logits with an actual discriminator: F=1, C=1, one hidden
  // pair computing +-(z + o) so that D(z, o) = z + o.
  Discriminator<double> disc(1, 1, 2, 99);
  auto params = disc.params();
  for (nn::Param<double>* p : params) {
    if (p->name == "disc.fc1.weight") {
      // rows: hidden x (F + C); h0 = z + o, h1 = -(z + o)
      p->value.at(0, 0) = 1.0;
      p->value.at(0, 1) = 1.0;
      p->value.at(1, 0) = -1.0;
      p->value.at(1, 1) = -1.0;
    } else if (p->name == "disc.fc2.weight") {
      p->value.at(0, 0) = 1.0;
      p->value.at(0, 1) = -1.0;
    } else {
      p->value.zero();
    }
  }
  // choose z, o so pos pairs give 1.0, 2.0 and cyclic negatives give -0.5, 0.5
  // pos_n = z_n + o_n ; neg_n = z_n + o_{(n+1)%2}
  // z0 + o0 = 1, z1 + o1 = 2, z0 + o1 = -0.5, z1 + o0 = 0.5
  // => o1 - o0 = -1.5 and o0 - o1 = -1.5 is inconsistent, so solve directly:
  // from (1) and (3): o0 - o1 = 1.5; from (2) and (4): o1 - o0 = 1.5. Those
  // conflict, so swap the negative targets instead: neg = {0.5, -0.5} gives
  // o0 - o1 = 0.5 - 2 = ... Use the order-invariance of the total: the sum
  // over pairs does not depend on which negative lands on which sample.
  Tensor<double> z({2, 1});
  Tensor<double> o({2, 1});
  z.at(0, 0) = 0.0;
  z.at(1, 0) = 1.25;  // o0 = 1 - z0 = 1; o1 = 2 - z1 = 0.75 is wrong for negs
  // Solve exactly: want {z0+o0, z1+o1} = {1, 2} and {z0+o1, z1+o0} = {-0.5, 0.5}
  // z0+o0 = 1; z1+o1 = 2; z0+o1 = -0.5; z1+o0 = 0.5
  // subtract: o0-o1 = 1.5 and o1-o0 = 1.5 -> infeasible. Target instead
  // pos = {1, 2}, neg = {0.5, -0.5} (same multiset, same loss):
  // z0+o0 = 1; z1+o1 = 2; z0+o1 = 0.5; z1+o0 = -0.5
  // o0-o1 = 0.5; o1-o0 = 2.5 -> still infeasible. Final fallback: accept any
  // realizable logits and compare against the oracle on those logits.
  z.at(0, 0) = 0.3;
  z.at(1, 0) = -0.7;
  o.at(0, 0) = 1.1;
  o.at(1, 0) = 0.4;
  const double pos0 = z.at(0, 0) + o.at(0, 0);
  const double pos1 = z.at(1, 0) + o.at(1, 0);
  const double neg0 = z.at(0, 0) + o.at(1, 0);
  const double neg1 = z.at(1, 0) + o.at(0, 0);
  const double expected = disc_oracle({pos0, pos1}, {neg0, neg1});
  CHECK(std::abs(discriminator_loss(z, o, disc) - expected) < 1e-9);
}

TEST_CASE("discriminator_loss: near-perfect discrimination drives the loss to 0") {
  // D(z, o) = 40 (z . o) via the two-sided ReLU trick, with z = o one-hot-ish
  Discriminator<double> disc(2, 2, 4, 5);
  auto params = disc.params();
  for (nn::Param<double>* p : params) p->value.zero();
  for (nn::Param<double>* p : params) {
    if (p->name == "disc.fc1.weight") {
      // h0 = z0+o0, h1 = -(z0+o0), h2 = z1+o1, h3 = -(z1+o1)
      p->value.at(0, 0) = 1.0;
      p->value.at(0, 2) = 1.0;
      p->value.at(1, 0) = -1.0;
      p->value.at(1, 2) = -1.0;
      p->value.at(2, 1) = 1.0;
      p->value.at(2, 3) = 1.0;
      p->value.at(3, 1) = -1.0;
      p->value.at(3, 3) = -1.0;
    } else if (p->name == "disc.fc2.weight") {
      // 10 (|z0 + o0| + |z1 + o1|) - 20: +20 for aligned pairs, -20 otherwise
      p->value.at(0, 0) = 10.0;
      p->value.at(0, 1) = 10.0;
      p->value.at(0, 2) = 10.0;
      p->value.at(0, 3) = 10.0;
    } else if (p->name == "disc.fc2.bias") {
      p->value[0] = -20.0;
    }
  }
  // paired: z = o = (+1,+1) or (-1,-1) -> D = 10*|2|+10*|2| - 20 = +20
  // unpaired (opposite signs) -> D = 0 + 0 - 20 = -20
  Tensor<double> z({2, 2});
  Tensor<double> o({2, 2});
  z.at(0, 0) = 1.0;
  z.at(0, 1) = 1.0;
  z.at(1, 0) = -1.0;
  z.at(1, 1) = -1.0;
  o = z;
  CHECK(discriminator_loss(z, o, disc) < 1e-6);
}

TEST_CASE("discriminator_loss: gradient w.r.t. z matches finite differences") {
  RandomEngine rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Discriminator<double> disc(5, 3, 8, 1000 + trial);
    Tensor<double> z = randn({4, 5}, rng);
    const Tensor<double> o = randn({4, 3}, rng);
    Tensor<double> dz;
    nn::zero_grads(disc.params());
    discriminator_loss(z, o, disc, &dz);
    for (Index i = 0; i < z.numel(); ++i) {
      const double h = 1e-5, orig = z[i];
      z[i] = orig + h;
      const double fp = discriminator_loss(z, o, disc);
      z[i] = orig - h;
      const double fm = discriminator_loss(z, o, disc);
      z[i] = orig;
      const double numeric = (fp - fm) / (2 * h);
      const double denom = std::max({1.0, std::abs(numeric), std::abs(dz[i])});
      CHECK(std::abs(dz[i] - numeric) / denom < 1e-4);
    }
  }
}

TEST_CASE("discriminator: batched evaluation equals per-item evaluation") {
  RandomEngine rng(11);
  Discriminator<float> disc(6, 4, 16, 3);
  Tensor<float> z({5, 6});
  Tensor<float> o({5, 4});
  for (Index i = 0; i < z.numel(); ++i) z[i] = static_cast<float>(rng.normal());
  for (Index i = 0; i < o.numel(); ++i) o[i] = static_cast<float>(rng.normal());
  const Tensor<float> batched = disc.forward(z, o);
  for (Index n = 0; n < 5; ++n) {
    Tensor<float> z1({1, 6});
    Tensor<float> o1({1, 4});
    for (Index f = 0; f < 6; ++f) z1.at(0, f) = z.at(n, f);
    for (Index c = 0; c < 4; ++c) o1.at(0, c) = o.at(n, c);
    const Tensor<float> one = disc.forward(z1, o1);
    CHECK(std::abs(one[0] - batched[n]) < 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Region boxes

TEST_CASE("region box: lambda 1 gives an empty box and the identity mask") {
  const RegionBox box = RegionBox::from_lambda(1.0, 100, 5, 640);
  CHECK(box.r_w == 0);
  CHECK(box.r_h == 0);
  CHECK(box.mask_zero_count() == 0);
  const Tensor<float> m = box.mask();
  for (Index i = 0; i < m.numel(); ++i) CHECK(m[i] == 1.0f);
}

TEST_CASE("region box: lambda 0.75 at L = 1024 gives 512 x 6") {
  const RegionBox box = RegionBox::from_lambda(0.75, 0, 0, 1024);
  CHECK(box.r_w == 512);
  CHECK(box.r_h == 6);
}

TEST_CASE("region box: unclipped zero-count is exact over 10k draws") {
  RandomEngine rng(12);
  const Index L = 640;
  for (int i = 0; i < 10000; ++i) {
    const RegionBox box = RegionBox::from_lambda(0.5, 0, 0, L);
    const Index expect = static_cast<Index>(std::llround(L * std::sqrt(0.5))) *
                         static_cast<Index>(std::llround(12 * std::sqrt(0.5)));
    CHECK(box.mask_zero_count() == expect);
  }
  (void)rng;
}

TEST_CASE("region box: sampled boxes keep the pre-clip identity and exact mask area") {
  RandomEngine rng(13);
  const Index L = 512;
  for (int i = 0; i < 10000; ++i) {
    const RegionBox box = sample_region_box(L, 1.0, rng);
    const Index rw = static_cast<Index>(std::llround(L * std::sqrt(1.0 - box.lambda)));
    const Index rh = static_cast<Index>(std::llround(12 * std::sqrt(1.0 - box.lambda)));
    CHECK(box.r_w == rw);
    CHECK(box.r_h == rh);
    const Index clipped = std::max<Index>(0, std::min(box.r_x + rw, L) - box.r_x) *
                          std::max<Index>(0, std::min<Index>(box.r_y + rh, 12) - box.r_y);
    CHECK(box.mask_zero_count() == clipped);
    CHECK(box.mask_zero_count() >= 0);
    CHECK(box.mask_zero_count() <= 12 * L);
  }
  // materialized mask agrees with the counts
  const RegionBox box = sample_region_box(L, 1.0, rng);
  const Tensor<float> m = box.mask();
  Index zeros = 0;
  for (Index i = 0; i < m.numel(); ++i) zeros += m[i] == 0.0f;
  CHECK(zeros == box.mask_zero_count());
}

TEST_CASE("region_mix: identity, full replacement, and mixed sums") {
  RandomEngine rng(14);
  const Index L = 96;
  Tensor<float> xi = Tensor<float>::full({12, L}, 1.0f);
  Tensor<float> xj = Tensor<float>::full({12, L}, 2.0f);

  const RegionBox id_box = RegionBox::from_lambda(1.0, 30, 4, L);
  const Tensor<float> same = region_mix(xi, xj, id_box);
  for (Index i = 0; i < same.numel(); ++i) CHECK(same[i] == 1.0f);

  const RegionBox all_box = RegionBox::from_lambda(0.0, 0, 0, L);
  const Tensor<float> swapped = region_mix(xi, xj, all_box);
  for (Index i = 0; i < swapped.numel(); ++i) CHECK(swapped[i] == 2.0f);

  for (int trial = 0; trial < 50; ++trial) {
    const RegionBox box = sample_region_box(L, 1.0, rng);
    const Tensor<float> mixed = region_mix(xi, xj, box);
    double sum = 0.0;
    for (Index i = 0; i < mixed.numel(); ++i) sum += mixed[i];
    CHECK(sum == doctest::Approx(12.0 * L + box.mask_zero_count()));
  }

  Tensor<float> wrong({12, L + 1});
  CHECK_THROWS_AS(region_mix(xi, wrong, id_box), std::invalid_argument);
}

TEST_CASE("mix_labels: weight equals the clipped mask fraction exactly") {
  const Index L = 1024;
  const std::vector<double> yi = {1.0, 0.0};
  const std::vector<double> yj = {0.0, 1.0};

  const RegionBox id_box = RegionBox::from_lambda(1.0, 0, 0, L);
  CHECK(mix_labels(yi, yj, id_box) == yi);

  const RegionBox box = RegionBox::from_lambda(0.75, 0, 0, L);
  const double w = static_cast<double>(box.mask_zero_count()) / (12.0 * L);
  CHECK(w == doctest::Approx(0.25).epsilon(0.01));
  const auto mixed = mix_labels(yi, yj, box);
  CHECK(mixed[0] == doctest::Approx(1.0 - w));
  CHECK(mixed[1] == doctest::Approx(w));

  // clipped boxes use the applied mask fraction
  RandomEngine rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const RegionBox b = sample_region_box(L, 1.0, rng);
    const auto m = mix_labels(yi, yj, b);
    const double wc = b.mask_fraction();
    CHECK(m[0] == doctest::Approx((1.0 - wc) * 1.0 + wc * 0.0).epsilon(1e-12));
  }
}

// ---------------------------------------------------------------------------
// Objectives

namespace {

struct TinyWorld {
  ClassifierNet<double> teacher;
  ClassifierNet<double> student;
  Discriminator<double> disc;
  DistillBatch<double> labeled;
  DistillBatch<double> unlabeled;

  TinyWorld()
      : teacher(tiny_spec(), 3, 100), student(tiny_spec(), 3, 200), disc(8, 3, 8, 300) {
    RandomEngine rng(400);
    const Index N = 4, L = 128;
    labeled.real = randn({N, 12, L}, rng, 0.5);
    labeled.restored = randn({N, 12, L}, rng, 0.5);
    labeled.labels = Tensor<double>({N, 3});
    for (Index i = 0; i < labeled.labels.numel(); ++i)
      labeled.labels[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    unlabeled.real = randn({N, 12, L}, rng, 0.5);
    unlabeled.restored = randn({N, 12, L}, rng, 0.5);
  }

  static ClassifierSpec tiny_spec() {
    ClassifierSpec spec = ClassifierSpec::for_tier("micro");
    spec.w1 = 6;
    spec.w2 = 8;
    spec.feature_dim = 8;
    spec.heads = 2;
    return spec;
  }
};

}  // namespace

TEST_CASE("labeled objective: alpha = beta = 0 equals the supervised loss alone") {
  TinyWorld w;
  KDConfig kd;
  kd.loss_alpha = 0.0;
  kd.loss_beta = 0.0;
  RandomEngine box_rng(1), partner_rng(2);
  nn::zero_grads(w.student.params());
  const LossReport rep = labeled_objective(w.teacher, w.student, &w.disc, w.labeled, kd,
                                           DistillVariant::VanillaKD, box_rng, partner_rng);
  const auto out = w.student.forward(w.labeled.restored);
  const double direct = bce_multilabel<double>(out.logits, w.labeled.labels);
  CHECK(rep.total == doctest::Approx(direct).epsilon(1e-12));
  CHECK(rep.total == doctest::Approx(rep.l_y).epsilon(1e-12));
}

TEST_CASE("labeled objective: component sum identity") {
  TinyWorld w;
  KDConfig kd;
  kd.loss_alpha = 0.7;
  kd.loss_beta = 0.3;
  kd.tau = 3.0;
  RandomEngine box_rng(3), partner_rng(4);
  nn::zero_grads(w.student.params());
  nn::zero_grads(w.disc.params());
  const LossReport rep = labeled_objective(w.teacher, w.student, &w.disc, w.labeled, kd,
                                           DistillVariant::Full, box_rng, partner_rng);
  CHECK(std::abs(rep.total - (rep.l_y + 0.7 * rep.l_k_labeled + 0.3 * rep.l_d_labeled)) < 1e-9);
  CHECK(std::isfinite(rep.total));
}

TEST_CASE("unlabeled objective: beta = 0 equals alpha * kd on the same mixed batch") {
  TinyWorld w;
  KDConfig kd;
  kd.loss_alpha = 0.9;
  kd.loss_beta = 0.0;
  // replicate the internal mixing with identical streams, then compare
  RandomEngine box_a(5), partner_a(6), box_b(5), partner_b(6);
  const auto mixed =
      detail::mix_batch(w.unlabeled, kd, /*mix=*/true, box_a, partner_a);
  const auto pt = w.teacher.forward(mixed.teacher_in).logits;
  const auto ps = w.student.forward(mixed.student_in).logits;
  const double expect = 0.9 * kd_loss<double>(ps, pt, kd.tau);

  nn::zero_grads(w.student.params());
  const LossReport rep = unlabeled_objective(w.teacher, w.student, &w.disc, w.unlabeled, kd,
                                             DistillVariant::Full, box_b, partner_b);
  CHECK(rep.total == doctest::Approx(expect).epsilon(1e-12));
  CHECK(rep.l_y == 0.0);
}

TEST_CASE("unlabeled objective: empty set contributes exactly zero") {
  TinyWorld w;
  KDConfig kd;
  DistillBatch<double> empty;
  RandomEngine box_rng(7), partner_rng(8);
  const LossReport rep = unlabeled_objective(w.teacher, w.student, &w.disc, empty, kd,
                                             DistillVariant::Full, box_rng, partner_rng);
  CHECK(rep.total == 0.0);
  CHECK(rep.l_k_unlabeled == 0.0);
  CHECK(rep.l_d_unlabeled == 0.0);
}

TEST_CASE("vanilla objective: alpha = 0 is the pure supervised loss and stays finite") {
  TinyWorld w;
  KDConfig kd;
  kd.loss_alpha = 0.0;
  RandomEngine box_rng(9), partner_rng(10);
  nn::zero_grads(w.student.params());
  const LossReport rep = vanilla_total(w.teacher, w.student, w.labeled, kd, box_rng, partner_rng);
  const auto out = w.student.forward(w.labeled.restored);
  CHECK(rep.total == doctest::Approx(bce_multilabel<double>(out.logits, w.labeled.labels))
                         .epsilon(1e-12));
}

TEST_CASE("vanilla objective equals the region path with lambda forced to 1") {
  TinyWorld w;
  KDConfig kd;
  kd.loss_alpha = 0.8;
  RandomEngine box_a(11), partner_a(12), box_b(13), partner_b(14);

  nn::zero_grads(w.student.params());
  const LossReport vanilla = vanilla_total(w.teacher, w.student, w.labeled, kd, box_a, partner_a);

  KDConfig forced = kd;
  forced.lambda_override = 1.0;
  nn::zero_grads(w.student.params());
  const LossReport region = labeled_objective<double>(w.teacher, w.student, nullptr, w.labeled, forced,
                                              DistillVariant::RegionKD, box_b, partner_b);
  CHECK(vanilla.total == region.total);  // bit-exact: lambda = 1 mixing is the identity
  CHECK(vanilla.l_k_labeled == region.l_k_labeled);
  CHECK(vanilla.l_y == region.l_y);
}
