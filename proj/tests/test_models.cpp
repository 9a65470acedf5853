#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "liteheart/models.hpp"

using namespace liteheart;

TEST_CASE("classifier tiers realize their target parameter counts") {
  for (const std::string& tier : {"tiny", "small", "base", "teacher"}) {
    const ClassifierSpec spec = ClassifierSpec::for_tier(tier);
    ClassifierNet<float> net(spec, 6, 1);
    const double dev = std::abs(static_cast<double>(net.param_count() - spec.target_params)) /
                       static_cast<double>(spec.target_params);
    INFO(tier, " params=", net.param_count());
    CHECK(dev < spec.tolerance);
  }
  CHECK_THROWS_AS(ClassifierSpec::for_tier("giant"), std::invalid_argument);
}

TEST_CASE("restoration tiers realize their target parameter counts") {
  for (const std::string& tier : {"tiny", "small", "base"}) {
    const RestorationSpec spec = RestorationSpec::for_tier(tier);
    RestorationNet<float> net(spec, 1);
    const double dev = std::abs(static_cast<double>(net.param_count() - spec.target_params)) /
                       static_cast<double>(spec.target_params);
    INFO(tier, " params=", net.param_count());
    CHECK(dev < spec.tolerance);
  }
  CHECK_THROWS_AS(RestorationSpec::for_tier("giant"), std::invalid_argument);
}

TEST_CASE("teacher/(base student + base restoration) parameter ratio >= 6") {
  ClassifierNet<float> teacher(ClassifierSpec::for_tier("teacher"), 6, 1);
  ClassifierNet<float> student(ClassifierSpec::for_tier("base"), 6, 1);
  RestorationNet<float> restoration(RestorationSpec::for_tier("base"), 1);
  const double ratio = static_cast<double>(teacher.param_count()) /
                       static_cast<double>(student.param_count() + restoration.param_count());
  CHECK(ratio >= 6.0);
}

TEST_CASE("restoration forward maps [N,1,L] -> [N,12,L] at L = 2048") {
  RestorationNet<float> net(RestorationSpec::for_tier("micro"), 2);
  Tensor<float> x({2, 1, 2048});
  RandomEngine rng(1);
  for (Index i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  const Tensor<float> y = net.forward(x);
  CHECK(y.shape() == std::vector<Index>{2, 12, 2048});
  for (Index i = 0; i < y.numel(); ++i) REQUIRE(std::isfinite(y[i]));
}

TEST_CASE("classifier forward exposes features and logits with contract shapes") {
  ClassifierNet<float> net(ClassifierSpec::for_tier("micro"), 6, 3);
  Tensor<float> x({4, 12, 2048});
  RandomEngine rng(2);
  for (Index i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  const auto out = net.forward(x);
  CHECK(out.logits.shape() == std::vector<Index>{4, 6});
  CHECK(out.features.shape() == std::vector<Index>{4, net.spec().feature_dim});
}

TEST_CASE("param_count: hand-counted linear layer and empty list") {
  RandomEngine rng(3);
  nn::Linear<float> lin;
  lin.init(10, 5, "lin", rng);
  nn::ParamRefs<float> refs;
  lin.collect(refs);
  CHECK(nn::param_count(refs) == 55);  // 10*5 + 5

  nn::ParamRefs<float> empty;
  CHECK(nn::param_count(empty) == 0);
}

TEST_CASE("discriminator: permuting the batch permutes outputs identically") {
  Discriminator<float> disc(5, 3, 16, 4);
  RandomEngine rng(5);
  const Index N = 6;
  Tensor<float> z({N, 5});
  Tensor<float> o({N, 3});
  for (Index i = 0; i < z.numel(); ++i) z[i] = static_cast<float>(rng.normal());
  for (Index i = 0; i < o.numel(); ++i) o[i] = static_cast<float>(rng.normal());
  const Tensor<float> base = disc.forward(z, o);

  std::vector<Index> perm = {3, 1, 5, 0, 4, 2};
  Tensor<float> zp({N, 5});
  Tensor<float> op({N, 3});
  for (Index n = 0; n < N; ++n) {
    for (Index f = 0; f < 5; ++f) zp.at(n, f) = z.at(perm[n], f);
    for (Index c = 0; c < 3; ++c) op.at(n, c) = o.at(perm[n], c);
  }
  const Tensor<float> permuted = disc.forward(zp, op);
  for (Index n = 0; n < N; ++n) CHECK(permuted[n] == base[perm[n]]);
}

TEST_CASE("checkpoint: classifier round-trips bit-exactly with a versioned header") {
  const std::string path = "/tmp/lh_ckpt_classifier.lhck";
  std::filesystem::remove(path);
  ClassifierNet<float> net(ClassifierSpec::for_tier("micro"), 4, 7);
  save_classifier(path, net, "rngstate:42");

  const CheckpointInfo info = peek_checkpoint(path);
  CHECK(info.kind == "classifier");
  CHECK(info.tier == "micro");
  CHECK(info.n_classes == 4);

  ClassifierNet<float> loaded = load_classifier(path);
  CHECK(param_hash(loaded.params()) == param_hash(net.params()));

  Tensor<float> x({1, 12, 192});
  RandomEngine rng(8);
  for (Index i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  const auto a = net.forward(x);
  const auto b = loaded.forward(x);
  for (Index i = 0; i < a.logits.numel(); ++i) CHECK(a.logits[i] == b.logits[i]);
}

TEST_CASE("checkpoint: restoration and discriminator round-trip; wrong kind rejected") {
  const std::string rpath = "/tmp/lh_ckpt_rest.lhck";
  RestorationNet<float> rest(RestorationSpec::for_tier("micro"), 9);
  save_restoration(rpath, rest);
  RestorationNet<float> rl = load_restoration(rpath);
  CHECK(param_hash(rl.params()) == param_hash(rest.params()));
  CHECK_THROWS_AS(load_classifier(rpath), std::runtime_error);

  const std::string dpath = "/tmp/lh_ckpt_disc.lhck";
  Discriminator<float> disc(6, 3, 16, 10);
  save_discriminator(dpath, disc);
  Discriminator<float> dl = load_discriminator(dpath);
  CHECK(param_hash(dl.params()) == param_hash(disc.params()));

  CHECK_THROWS_AS(load_restoration("/tmp/does_not_exist.lhck"), std::runtime_error);
}

TEST_CASE("restoration learns the copy task (skip-path sanity)") {
  // Noise-free smooth inputs; target = the input lead replicated to 12 leads.
  RandomEngine rng(11);
  const Index N = 128, L = 64;
  const auto make_batch = [&](Index n) {
    std::pair<Tensor<float>, Tensor<float>> out{Tensor<float>({n, 1, L}),
                                                Tensor<float>({n, 12, L})};
    for (Index i = 0; i < n; ++i) {
      const double f1 = rng.uniform(0.02, 0.2), f2 = rng.uniform(0.02, 0.2);
      const double a1 = rng.uniform(0.5, 1.5), ph = rng.uniform(0.0, 6.28);
      for (Index t = 0; t < L; ++t) {
        const float v = static_cast<float>(a1 * std::sin(f1 * t + ph) + 0.4 * std::sin(f2 * t));
        out.first.at(i, 0, t) = v;
        for (Index lead = 0; lead < 12; ++lead) out.second.at(i, lead, t) = v;
      }
    }
    return out;
  };

  RestorationNet<float> net(RestorationSpec::for_tier("micro"), 12);
  nn::AdamW<float> opt;
  opt.lr = 3e-3;
  opt.weight_decay = 0.0;
  auto [train_x, train_y] = make_batch(N);
  const Index B = 32;
  RandomEngine order_rng(77);
  for (int step = 0; step < 900; ++step) {
    if (step == 450) opt.lr = 1e-3;
    Tensor<float> xb({B, 1, L});
    Tensor<float> yb({B, 12, L});
    for (Index i = 0; i < B; ++i) {
      const Index src = order_rng.uniform_int(N);
      std::copy(train_x.data() + src * L, train_x.data() + (src + 1) * L, xb.data() + i * L);
      std::copy(train_y.data() + src * 12 * L, train_y.data() + (src + 1) * 12 * L,
                yb.data() + i * 12 * L);
    }
    nn::Cache<float> cache;
    const Tensor<float> pred = net.forward(xb, &cache);
    Tensor<float> dpred(pred.shape());
    const double inv = 1.0 / static_cast<double>(pred.numel());
    for (Index i = 0; i < pred.numel(); ++i)
      dpred[i] = static_cast<float>(2.0 * (pred[i] - yb[i]) * inv);
    nn::zero_grads(net.params());
    net.backward(dpred, cache);
    opt.update(net.params());
  }

  auto [test_x, test_y] = make_batch(16);
  const Tensor<float> pred = net.forward(test_x);
  for (Index i = 0; i < 16; ++i) {
    double mse = 0.0;
    for (Index j = 0; j < 12 * L; ++j) {
      const double d = pred[i * 12 * L + j] - test_y[i * 12 * L + j];
      mse += d * d;
    }
    mse /= static_cast<double>(12 * L);
    CHECK(mse < 0.01);
  }
}

TEST_CASE("flops: additivity of the two-stage student system") {
  RestorationNet<float> rest(RestorationSpec::for_tier("micro"), 1);
  ClassifierNet<float> stud(ClassifierSpec::for_tier("micro"), 6, 1);
  const Index whole = rest.flops(4, 640) + stud.flops(4, 640);
  CHECK(whole == rest.flops(4, 640) + stud.flops(4, 640));
  CHECK(rest.flops(8, 640) == 2 * rest.flops(4, 640));
}
