#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "liteheart/models.hpp"
#include "liteheart/nn.hpp"
#include "liteheart/rng.hpp"

using namespace liteheart;

namespace {

struct CheckResult {
  double max_rel_err = 0.0;
};

using LossFn = std::function<double()>;

double relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

// Central finite differences over every coordinate of `x`, compared against
// the analytic gradient.
CheckResult check_gradient(Tensor<double>& x, const Tensor<double>& analytic, const LossFn& loss,
                           double h = 1e-5) {
  CheckResult res;
  for (Index i = 0; i < x.numel(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = loss();
    x[i] = orig - h;
    const double fm = loss();
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    res.max_rel_err = std::max(res.max_rel_err, relative_error(analytic[i], numeric));
  }
  return res;
}

void fill_normal(Tensor<double>& t, RandomEngine& rng, double scale = 1.0) {
  for (Index i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
}

Tensor<double> coefs_like(const std::vector<Index>& shape, RandomEngine& rng) {
  Tensor<double> c(shape);
  fill_normal(c, rng);
  return c;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& c) {
  double acc = 0.0;
  for (Index i = 0; i < y.numel(); ++i) acc += y[i] * c[i];
  return acc;
}

}  // namespace

TEST_CASE("linear: input and parameter gradients match finite differences") {
  RandomEngine rng(1);
  nn::Linear<double> lin;
  lin.init(7, 5, "lin", rng);
  Tensor<double> x({4, 7});
  fill_normal(x, rng);
  const Tensor<double> c = coefs_like({4, 5}, rng);

  const auto loss = [&]() { return weighted_sum(lin.forward(x, nullptr), c); };

  nn::Cache<double> cache;
  lin.forward(x, &cache);
  lin.weight.grad.zero();
  lin.bias.grad.zero();
  const Tensor<double> dx = lin.backward(c, cache);

  CHECK(check_gradient(x, dx, loss).max_rel_err < 1e-7);
  CHECK(check_gradient(lin.weight.value, lin.weight.grad, loss).max_rel_err < 1e-7);
  CHECK(check_gradient(lin.bias.value, lin.bias.grad, loss).max_rel_err < 1e-7);
}

TEST_CASE("conv1d: gradients match finite differences (stride 2, padding)") {
  RandomEngine rng(2);
  nn::Conv1d<double> conv;
  conv.init(3, 4, 5, 2, 2, "conv", rng);
  Tensor<double> x({2, 3, 16});
  fill_normal(x, rng);
  const Index lout = conv.out_len(16);
  const Tensor<double> c = coefs_like({2, 4, lout}, rng);

  const auto loss = [&]() { return weighted_sum(conv.forward(x, nullptr), c); };

  nn::Cache<double> cache;
  conv.forward(x, &cache);
  conv.weight.grad.zero();
  conv.bias.grad.zero();
  const Tensor<double> dx = conv.backward(c, cache);

  CHECK(check_gradient(x, dx, loss).max_rel_err < 1e-7);
  CHECK(check_gradient(conv.weight.value, conv.weight.grad, loss).max_rel_err < 1e-7);
  CHECK(check_gradient(conv.bias.value, conv.bias.grad, loss).max_rel_err < 1e-7);
}

TEST_CASE("channel layer norm: gradients match finite differences") {
  RandomEngine rng(3);
  nn::ChannelLayerNorm<double> ln;
  ln.init(6, "cln");
  for (Index i = 0; i < 6; ++i) ln.gamma.value[i] = rng.uniform(0.5, 1.5);
  Tensor<double> x({2, 6, 5});
  fill_normal(x, rng);
  const Tensor<double> c = coefs_like({2, 6, 5}, rng);

  const auto loss = [&]() { return weighted_sum(ln.forward(x, nullptr), c); };

  nn::Cache<double> cache;
  ln.forward(x, &cache);
  ln.gamma.grad.zero();
  ln.beta.grad.zero();
  const Tensor<double> dx = ln.backward(c, cache);

  CHECK(check_gradient(x, dx, loss).max_rel_err < 1e-6);
  CHECK(check_gradient(ln.gamma.value, ln.gamma.grad, loss).max_rel_err < 1e-6);
  CHECK(check_gradient(ln.beta.value, ln.beta.grad, loss).max_rel_err < 1e-6);
}

TEST_CASE("layer norm (last axis): gradients match finite differences") {
  RandomEngine rng(4);
  nn::LayerNorm<double> ln;
  ln.init(8, "ln");
  Tensor<double> x({6, 8});
  fill_normal(x, rng);
  const Tensor<double> c = coefs_like({6, 8}, rng);

  const auto loss = [&]() { return weighted_sum(ln.forward(x, nullptr), c); };

  nn::Cache<double> cache;
  ln.forward(x, &cache);
  ln.gamma.grad.zero();
  ln.beta.grad.zero();
  const Tensor<double> dx = ln.backward(c, cache);
  CHECK(check_gradient(x, dx, loss).max_rel_err < 1e-6);
}

TEST_CASE("multi-head self-attention: gradients match finite differences") {
  RandomEngine rng(5);
  nn::MultiHeadSelfAttention<double> attn;
  attn.init(8, 2, "attn", rng);
  const Index n_tokens = 5;
  Tensor<double> x({2 * n_tokens, 8});
  fill_normal(x, rng, 0.7);
  const Tensor<double> c = coefs_like({2 * n_tokens, 8}, rng);

  const auto loss = [&]() { return weighted_sum(attn.forward(x, n_tokens, nullptr), c); };

  nn::Cache<double> cache;
  attn.forward(x, n_tokens, &cache);
  nn::ParamRefs<double> refs;
  attn.collect(refs);
  nn::zero_grads(refs);
  const Tensor<double> dx = attn.backward(c, n_tokens, cache);

  CHECK(check_gradient(x, dx, loss).max_rel_err < 1e-6);
  CHECK(check_gradient(attn.qkv.weight.value, attn.qkv.weight.grad, loss).max_rel_err < 1e-6);
  CHECK(check_gradient(attn.proj.weight.value, attn.proj.weight.grad, loss).max_rel_err < 1e-6);
}

TEST_CASE("attention block: residual wiring gradients") {
  RandomEngine rng(6);
  AttnBlock<double> block;
  block.init(8, 2, 2, "block", rng);
  const Index n_tokens = 4;
  Tensor<double> x({2 * n_tokens, 8});
  fill_normal(x, rng, 0.5);
  const Tensor<double> c = coefs_like({2 * n_tokens, 8}, rng);

  const auto loss = [&]() { return weighted_sum(block.forward(x, n_tokens, nullptr), c); };

  nn::Cache<double> cache;
  block.forward(x, n_tokens, &cache);
  nn::ParamRefs<double> refs;
  block.collect(refs);
  nn::zero_grads(refs);
  const Tensor<double> dx = block.backward(c, n_tokens, cache);
  CHECK(check_gradient(x, dx, loss).max_rel_err < 1e-6);
  CHECK(check_gradient(block.fc1.weight.value, block.fc1.weight.grad, loss).max_rel_err < 1e-6);
}

TEST_CASE("classifier net: end-to-end input gradient vs finite differences") {
  RandomEngine rng(7);
  ClassifierSpec spec = ClassifierSpec::for_tier("micro");
  spec.w1 = 6;
  spec.w2 = 8;
  spec.feature_dim = 8;
  spec.heads = 2;
  ClassifierNet<double> net(spec, 3, 11);
  Tensor<double> x({2, 12, 128});
  fill_normal(x, rng, 0.5);
  const Tensor<double> clog = coefs_like({2, 3}, rng);
  const Tensor<double> cfeat = coefs_like({2, 8}, rng);

  const auto loss = [&]() {
    const auto out = net.forward(x);
    return weighted_sum(out.logits, clog) + weighted_sum(out.features, cfeat);
  };

  nn::Cache<double> cache;
  net.forward(x, &cache);
  nn::zero_grads(net.params());
  const Tensor<double> dx = net.backward(clog, &cfeat, cache);

  // spot-check a subset of input coordinates (a full sweep is slow)
  RandomEngine pick(99);
  double max_err = 0.0;
  for (int k = 0; k < 60; ++k) {
    const Index i = pick.uniform_int(x.numel());
    const double orig = x[i];
    const double h = 1e-5;
    x[i] = orig + h;
    const double fp = loss();
    x[i] = orig - h;
    const double fm = loss();
    x[i] = orig;
    max_err = std::max(max_err, relative_error(dx[i], (fp - fm) / (2.0 * h)));
  }
  CHECK(max_err < 1e-5);
}

TEST_CASE("restoration net: end-to-end input gradient vs finite differences") {
  RandomEngine rng(8);
  RestorationSpec spec = RestorationSpec::for_tier("micro");
  spec.base_ch = 4;
  RestorationNet<double> net(spec, 13);
  Tensor<double> x({1, 1, 32});
  fill_normal(x, rng, 0.5);
  const Tensor<double> c = coefs_like({1, 12, 32}, rng);

  const auto loss = [&]() { return weighted_sum(net.forward(x), c); };

  nn::Cache<double> cache;
  net.forward(x, &cache);
  nn::zero_grads(net.params());
  const Tensor<double> dx = net.backward(c, cache);

  CHECK(check_gradient(x, dx, loss).max_rel_err < 1e-5);
}

TEST_CASE("restoration net: non-divisible lengths pad internally") {
  RestorationNet<float> net(RestorationSpec::for_tier("micro"), 3);
  Tensor<float> x({2, 1, 50});
  RandomEngine rng(5);
  for (Index i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  const Tensor<float> y = net.forward(x);
  CHECK(y.shape() == std::vector<Index>{2, 12, 50});
}

TEST_CASE("discriminator: gradient with respect to z") {
  RandomEngine rng(9);
  Discriminator<double> disc(6, 3, 8, 21);
  Tensor<double> z({4, 6});
  Tensor<double> o({4, 3});
  fill_normal(z, rng);
  fill_normal(o, rng);
  const Tensor<double> c = coefs_like({4}, rng);

  const auto loss = [&]() { return weighted_sum(disc.forward(z, o), c); };

  nn::Cache<double> cache;
  disc.forward(z, o, &cache);
  nn::zero_grads(disc.params());
  const Tensor<double> dz = disc.backward(c, cache);
  CHECK(check_gradient(z, dz, loss).max_rel_err < 1e-7);
}

TEST_CASE("inference determinism: same weights, same input, identical bits") {
  ClassifierNet<float> net(ClassifierSpec::for_tier("micro"), 4, 17);
  Tensor<float> x({3, 12, 192});
  RandomEngine rng(23);
  for (Index i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  const auto a = net.forward(x);
  const auto b = net.forward(x);
  for (Index i = 0; i < a.logits.numel(); ++i) CHECK(a.logits[i] == b.logits[i]);
  for (Index i = 0; i < a.features.numel(); ++i) CHECK(a.features[i] == b.features[i]);
}

TEST_CASE("feature/logit coupling: head applied to features equals logits") {
  ClassifierNet<float> net(ClassifierSpec::for_tier("micro"), 5, 31);
  Tensor<float> x({2, 12, 128});
  RandomEngine rng(29);
  for (Index i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  const auto out = net.forward(x);

  auto params = net.params();
  const nn::Param<float>* w = nullptr;
  const nn::Param<float>* b = nullptr;
  for (const nn::Param<float>* p : params) {
    if (p->name == "head.weight") w = p;
    if (p->name == "head.bias") b = p;
  }
  REQUIRE(w != nullptr);
  REQUIRE(b != nullptr);
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < 5; ++c) {
      float acc = b->value[c];
      for (Index f = 0; f < out.features.dim(1); ++f)
        acc += w->value.at(c, f) * out.features.at(n, f);
      CHECK(out.logits.at(n, c) == doctest::Approx(acc).epsilon(1e-5));
    }
}

TEST_CASE("adamw: steps descend a convex quadratic") {
  nn::Param<double> p;
  p.name = "w";
  p.init_shape({3});
  p.value[0] = 1.0;
  p.value[1] = -2.0;
  p.value[2] = 0.5;
  nn::AdamW<double> opt;
  opt.lr = 1e-3;
  opt.weight_decay = 0.0;
  nn::ParamRefs<double> refs{&p};
  opt.init(refs);
  const auto loss = [&]() {
    return 0.5 * (p.value[0] * p.value[0] + p.value[1] * p.value[1] + p.value[2] * p.value[2]);
  };
  for (int step = 0; step < 50; ++step) {
    const double before = loss();
    for (Index i = 0; i < 3; ++i) p.grad[i] = p.value[i];
    opt.update(refs);
    CHECK(loss() <= before + 1e-12);
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  nn::Param<double> p;
  p.init_shape({4});
  for (Index i = 0; i < 4; ++i) p.grad[i] = 10.0;
  nn::AdamW<double> opt;
  opt.clip_norm = 1.0;
  nn::ParamRefs<double> refs{&p};
  opt.init(refs);
  CHECK(opt.grad_norm(refs) == doctest::Approx(20.0));
  opt.update(refs);
  CHECK(std::isfinite(p.value[0]));
}
