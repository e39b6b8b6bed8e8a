#include "affect/heads.hpp"
#include "affect/metrics.hpp"
#include "affect/postprocess.hpp"

#include "oracles.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <random>

using namespace affect;

namespace {

Matrix inputs_avoiding_kinks(std::mt19937_64& gen, const HeadModel& m, Eigen::Index rows) {
  while (true) {
    Matrix x = oracle::random_matrix(gen, rows, static_cast<Eigen::Index>(m.input_dim));
    if (!m.hidden) return x;
    const Matrix pre = (x * m.hidden->weight.transpose()).rowwise() + m.hidden->bias.transpose();
    if (pre.cwiseAbs().minCoeff() > 1e-3) return x;
  }
}

}  // namespace

TEST_SUITE("heads") {
  TEST_CASE("selector widths and layout") {
    CHECK(input_dim(FeatureSelector::LogitsVa, 1280) == 10);
    CHECK(input_dim(FeatureSelector::Embeddings, 1280) == 1280);
    CHECK(input_dim(FeatureSelector::EmbeddingsPlusLogits, 1280) == 1290);
    FrameFeatures f{0, {9, 10}, {1, 2, 3, 4, 5, 6, 7, 8}, 0.25, -0.5};
    std::vector<double> out(12);
    select_features(f, FeatureSelector::EmbeddingsPlusLogits, out);
    CHECK(out == std::vector<double>{9, 10, 1, 2, 3, 4, 5, 6, 7, 8, 0.25, -0.5});
    std::vector<double> wrong(5);
    CHECK_THROWS_AS(select_features(f, FeatureSelector::LogitsVa, wrong), DataError);
    CHECK(parse_selector("embeddings") == FeatureSelector::Embeddings);
    CHECK_THROWS_AS(parse_selector("pixels"), ConfigError);
  }

  TEST_CASE("glorot init is bounded and seeded") {
    const auto a = init_head(FeatureSelector::Embeddings, 20, 16, 8, OutputActivation::Softmax, 4);
    const auto b = init_head(FeatureSelector::Embeddings, 20, 16, 8, OutputActivation::Softmax, 4);
    CHECK(a.hidden->weight == b.hidden->weight);
    CHECK(a.output.weight == b.output.weight);
    CHECK(a.hidden->weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 36));
    CHECK(a.output.weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 24));
    CHECK(a.output.bias.isZero());
    CHECK(a.kind() == "softmax_8");
  }

  TEST_CASE("activations produce valid outputs") {
    std::mt19937_64 gen(1);
    const Matrix x = oracle::random_matrix(gen, 30, 6, 3.0);
    const auto sm = init_head(FeatureSelector::Embeddings, 6, 5, 8, OutputActivation::Softmax, 1);
    const Matrix p = forward(sm, x);
    for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((p.array() >= 0).all());
    const auto sg = init_head(FeatureSelector::Embeddings, 6, 5, 12, OutputActivation::Sigmoid, 1);
    const Matrix s = forward(sg, x);
    CHECK((s.array() >= 0).all());
    CHECK((s.array() <= 1).all());
    const auto th = init_head(FeatureSelector::Embeddings, 6, std::nullopt, 2, OutputActivation::Tanh, 1);
    CHECK((predict_va(th, x).cwiseAbs().array() <= 1).all());
    CHECK_THROWS_AS(predict_proba(th, x), ConfigError);
    CHECK_THROWS_AS(forward(th, oracle::random_matrix(gen, 3, 7)), DataError);
  }

  TEST_CASE("analytic gradients match finite differences") {
    std::mt19937_64 gen(123);
    for (int rep = 0; rep < 10; ++rep) {
      const Eigen::Index in = 3 + gen() % 4, rows = 6 + gen() % 6;

      auto va = init_head(FeatureSelector::Embeddings, in, std::nullopt, 2, OutputActivation::Tanh, gen());
      const Matrix xv = oracle::random_matrix(gen, rows, in);
      const Matrix yv = oracle::random_matrix(gen, rows, 2, 0.5);
      const auto gv = ccc_loss_gradient(va, xv, yv).gradient;
      const auto fv = oracle::finite_difference(va, [&](const HeadModel& m) { return ccc_loss_gradient(m, xv, yv).loss; });
      CHECK(oracle::relative_error(gv, fv) < 1e-4);

      auto ce = init_head(FeatureSelector::Embeddings, in, 4, 5, OutputActivation::Softmax, gen());
      const Matrix xc = inputs_avoiding_kinks(gen, ce, rows);
      std::vector<int> yc(rows);
      for (auto& y : yc) y = int(gen() % 5);
      const std::vector<double> wc{0.5, 1.0, 2.0, 0.0, 1.5};
      const auto gc = cross_entropy_gradient(ce, xc, yc, wc).gradient;
      const auto fc =
          oracle::finite_difference(ce, [&](const HeadModel& m) { return cross_entropy_gradient(m, xc, yc, wc).loss; });
      CHECK(oracle::relative_error(gc, fc) < 1e-4);

      auto bce = init_head(FeatureSelector::Embeddings, in, 4, 3, OutputActivation::Sigmoid, gen());
      const Matrix xb = inputs_avoiding_kinks(gen, bce, rows);
      BitMatrix yb(rows, 3);
      for (Eigen::Index i = 0; i < yb.size(); ++i) yb.data()[i] = gen() % 2;
      const std::vector<double> wb{1.0, 3.0, 0.25};
      const auto gb = bce_gradient(bce, xb, yb, wb).gradient;
      const auto fb = oracle::finite_difference(bce, [&](const HeadModel& m) { return bce_gradient(m, xb, yb, wb).loss; });
      CHECK(oracle::relative_error(gb, fb) < 1e-4);
    }
  }

  TEST_CASE("loss values at known points") {
    // Zero weights: uniform softmax, loss = log(K) for unit weights.
    auto m = init_head(FeatureSelector::Embeddings, 3, std::nullopt, 4, OutputActivation::Softmax, 0);
    m.output.weight.setZero();
    const Matrix x = Matrix::Ones(2, 3);
    const std::vector<int> y{0, 3};
    const std::vector<double> w(4, 1.0);
    CHECK(cross_entropy_gradient(m, x, y, w).loss == doctest::Approx(std::log(4.0)));
    m.activation = OutputActivation::Sigmoid;
    BitMatrix b(2, 4);
    b << 1, 0, 0, 1, 0, 0, 1, 1;
    CHECK(bce_gradient(m, x, b, w).loss == doctest::Approx(4 * std::log(2.0)));
  }

  TEST_CASE("auto class weights") {
    const std::vector<int> balanced{0, 1, 2, 0, 1, 2};
    CHECK(auto_class_weights(balanced, 3) == std::vector<double>{1, 1, 1});
    const std::vector<int> skewed{0, 0, 0, 1};
    std::vector<std::string> warnings;
    const auto w = auto_class_weights(skewed, 3, &warnings);
    CHECK(w[1] / w[0] == doctest::Approx(3.0));
    CHECK((w[0] + w[1]) / 2 == doctest::Approx(1.0));
    CHECK(w[2] == 0.0);
    CHECK(warnings.size() == 1);
  }

  TEST_CASE("auto unit weights") {
    BitMatrix y = BitMatrix::Zero(202, 3);
    y(0, 0) = 1;
    y(0, 1) = y(1, 1) = 1;
    std::vector<std::string> warnings;
    const auto w = auto_unit_weights(y, &warnings);
    CHECK(w[0] == 100.0);  // 201 negatives per positive, capped
    CHECK(w[1] == 100.0);
    CHECK(w[2] == 1.0);
    CHECK(warnings.size() == 1);
  }

  TEST_CASE("pretrained logit adapter") {
    std::vector<double> l(8, 0.0);
    l[4] = 3.0;  // Happiness
    CHECK(adapt_pretrained_logits(l, 0.1) == 4);
    l[1] = 10.0;  // Contempt never wins
    CHECK(adapt_pretrained_logits(l, 0.1) == 4);
    l[5] = 5.0;  // Neutral
    CHECK(adapt_pretrained_logits(l, 0.1) == 0);
    CHECK(adapt_pretrained_logits(l, 0.5) == kOtherClass);
    CHECK(adapt_pretrained_logits(l, 0.7, 0.8) == 0);
    CHECK_THROWS_AS(adapt_pretrained_logits(std::vector<double>(7, 0.0), 0.0), DataError);
  }

  TEST_CASE("train config json round trip and validation") {
    TrainConfig c;
    c.class_weights = std::vector<double>{1, 2};
    c.epochs = 7;
    const nlohmann::json j = c;
    const auto back = j.get<TrainConfig>();
    CHECK(back.epochs == 7);
    CHECK(*back.class_weights == std::vector<double>{1, 2});
    CHECK(nlohmann::json(TrainConfig{})["class_weights"] == "auto");
    TrainConfig bad;
    bad.learning_rate = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.class_weights = std::vector<double>{-1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(TrainConfig::va_defaults().batch_size == 4096);
  }

  TEST_CASE("VA head learns a linear target") {
    std::mt19937_64 gen(5);
    const Matrix x = oracle::random_matrix(gen, 2000, 4);
    Matrix y(2000, 2);
    y.col(0) = (0.4 * x.col(0) - 0.2 * x.col(1)).array().tanh();
    y.col(1) = (0.3 * x.col(2) + 0.1 * x.col(3)).array().tanh();
    TrainConfig c = TrainConfig::va_defaults();
    c.batch_size = 256;
    c.epochs = 60;
    c.learning_rate = 0.1;
    const auto r = train_va_head(FeatureSelector::Embeddings, {x, y}, c);
    CHECK(r.model.kind() == "tanh_2");
    CHECK_FALSE(r.model.hidden);
    CHECK(r.log.size() == 60);
    CHECK(r.log.back().loss < r.log.front().loss);
    const Matrix p = predict_va(r.model, x);
    const Vector pv = p.col(0), tv = y.col(0);
    CHECK(ccc({pv.data(), 2000}, {tv.data(), 2000}) > 0.95);
  }

  TEST_CASE("VA training skips constant-target batches") {
    const Matrix x = Matrix::Random(8, 3);
    const Matrix y = Matrix::Constant(8, 2, 0.2);
    TrainConfig c = TrainConfig::va_defaults();
    c.epochs = 2;
    c.batch_size = 4;
    const auto r = train_va_head(FeatureSelector::Embeddings, {x, y}, c);
    CHECK(r.skipped_batches == 4);
    CHECK_FALSE(r.warnings.empty());
  }

  TEST_CASE("classifier training is deterministic and separates classes") {
    std::mt19937_64 gen(8);
    Matrix x = oracle::random_matrix(gen, 600, 5);
    std::vector<int> y(600);
    for (Eigen::Index i = 0; i < 600; ++i) y[i] = x(i, 0) > 0.5 ? 2 : (x(i, 1) > 0 ? 1 : 0);
    TrainConfig c;
    c.epochs = 40;
    c.batch_size = 32;
    c.hidden_size = 16;
    c.learning_rate = 0.05;
    c.seed = 3;
    const auto a = train_classifier(FeatureSelector::Embeddings, {x, y}, 3, c);
    const auto b = train_classifier(FeatureSelector::Embeddings, {x, y}, 3, c);
    CHECK(head_to_json(a.model) == head_to_json(b.model));
    CHECK(macro_f1(argmax_rows(forward(a.model, x)), y, 3).macro_f1 > 0.85);
    CHECK(a.loss_weights.size() == 3);

    ClassData val{x.topRows(100), std::vector<int>(y.begin(), y.begin() + 100)};
    const auto v = train_classifier(FeatureSelector::Embeddings, {x, y}, 3, c, &val);
    CHECK(v.best_epoch >= 1);
    double best = -1;
    for (const auto& e : v.log) best = std::max(best, *e.validation_metric);
    CHECK(v.log[v.best_epoch - 1].validation_metric == best);

    c.class_weights = std::vector<double>{1, 1};
    CHECK_THROWS_AS(train_classifier(FeatureSelector::Embeddings, {x, y}, 3, c), ConfigError);
  }

  TEST_CASE("AU head and other detector shapes") {
    std::mt19937_64 gen(9);
    const Matrix x = oracle::random_matrix(gen, 200, 4);
    BitMatrix y(200, 12);
    for (Eigen::Index i = 0; i < 200; ++i)
      for (int u = 0; u < 12; ++u) y(i, u) = x(i, u % 4) > 0.3 * (u / 4);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 64;
    c.hidden_size = 8;
    const auto au = train_au_head(FeatureSelector::Embeddings, {x, y}, c);
    CHECK(au.model.kind() == "sigmoid_12");
    CHECK(au.loss_weights.size() == 12);

    std::vector<int> e(200);
    for (int i = 0; i < 200; ++i) e[i] = i % 8;
    const auto other = train_other_detector(FeatureSelector::Embeddings, {x, e}, c);
    CHECK(other.model.kind() == "softmax_2");
  }

  TEST_CASE("head serialization round trips bit-exactly") {
    auto m = init_head(FeatureSelector::EmbeddingsPlusLogits, 13, 7, 12, OutputActivation::Sigmoid, 42);
    m.output.bias[3] = -0.1;
    m.loss = "weighted_binary_cross_entropy";
    const auto path = std::filesystem::temp_directory_path() / "affect_head_roundtrip.json";
    save_head(m, path);
    const auto back = load_head(path);
    CHECK(back.selector == m.selector);
    CHECK(back.input_dim == 13);
    CHECK(back.hidden->weight == m.hidden->weight);
    CHECK(back.output.bias == m.output.bias);
    CHECK(back.activation == m.activation);
    CHECK(back.loss == m.loss);
    CHECK(head_to_json(back) == head_to_json(m));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_head(path), DataError);
    auto j = head_to_json(m);
    j["output"]["weight"] = "!!!";
    CHECK_THROWS_AS(head_from_json(j), DataError);
  }

  TEST_CASE("planted tanh head is recovered") {
    std::mt19937_64 gen(12);
    auto planted = init_head(FeatureSelector::LogitsVa, 10, std::nullopt, 2, OutputActivation::Tanh, 99);
    planted.output.weight *= 0.5;
    planted.output.bias << 0.1, -0.05;
    const Matrix x = oracle::random_matrix(gen, 3000, 10);
    const Matrix y = predict_va(planted, x);
    // Forward pass reproduces the planted targets.
    CHECK((predict_va(planted, x) - y).cwiseAbs().maxCoeff() <= 1e-6);

    TrainConfig c = TrainConfig::va_defaults();
    c.batch_size = 256;
    c.epochs = 60;
    c.learning_rate = 0.1;
    c.seed = 4;
    const auto r = train_va_head(FeatureSelector::LogitsVa, {x, y}, c);
    const Matrix p = predict_va(r.model, x);
    const Vector pv = p.col(0), pa = p.col(1), tv = y.col(0), ta = y.col(1);
    CHECK(mean_ccc({pv.data(), 3000}, {pa.data(), 3000}, {tv.data(), 3000}, {ta.data(), 3000}).p_va >= 0.99);

    const auto again = train_va_head(FeatureSelector::LogitsVa, {x, y}, c);
    CHECK(again.model.output.weight == r.model.output.weight);
    CHECK(again.model.output.bias == r.model.output.bias);

    c.epochs = 0;
    CHECK_THROWS_AS(train_va_head(FeatureSelector::LogitsVa, {x, y}, c), ConfigError);
  }

  TEST_CASE("zero tanh head predicts zero") {
    auto m = init_head(FeatureSelector::LogitsVa, 10, std::nullopt, 2, OutputActivation::Tanh, 0);
    m.output.weight.setZero();
    m.output.bias.setZero();
    std::mt19937_64 gen(1);
    CHECK(predict_va(m, oracle::random_matrix(gen, 7, 10)).isZero(0.0));
    const auto big = init_head(FeatureSelector::LogitsVa, 10, std::nullopt, 2, OutputActivation::Tanh, 0);
    const Matrix p = predict_va(big, oracle::random_matrix(gen, 50, 10, 100.0));
    CHECK((p.array().abs() <= 1.0).all());
  }

  TEST_CASE("separable two-class toy set reaches full accuracy") {
    std::mt19937_64 gen(21);
    const Matrix x = oracle::random_matrix(gen, 200, 3);
    std::vector<int> y(200);
    for (int i = 0; i < 200; ++i) y[i] = x(i, 0) + 0.5 * x(i, 1) > 0 ? 1 : 0;
    TrainConfig c;
    c.epochs = 200;
    c.batch_size = 32;
    c.hidden_size = 16;
    c.learning_rate = 0.1;
    const auto r = train_classifier(FeatureSelector::Embeddings, {x, y}, 8, c);
    CHECK(r.model.kind() == "softmax_8");
    CHECK(*macro_f1(argmax_rows(predict_proba(r.model, x)), y, 8).accuracy == 1.0);
    CHECK(r.loss_weights[5] == 0.0);
    CHECK(r.warnings.size() == 6);
  }

  TEST_CASE("uniform weights equal AUTO on balanced data") {
    std::mt19937_64 gen(22);
    const Matrix x = oracle::random_matrix(gen, 80, 4);
    std::vector<int> y(80);
    for (int i = 0; i < 80; ++i) y[i] = i % 8;
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 16;
    c.hidden_size = 8;
    const auto automatic = train_classifier(FeatureSelector::Embeddings, {x, y}, 8, c);
    c.class_weights = std::vector<double>(8, 1.0);
    const auto uniform = train_classifier(FeatureSelector::Embeddings, {x, y}, 8, c);
    CHECK(head_to_json(automatic.model) == head_to_json(uniform.model));
  }

  TEST_CASE("planted AU labels are learned") {
    const auto data = generate_synthetic({Task::AU, 4, 500, 0.0, 13, 16});
    const auto al = align(data.dataset, data.labels, Task::AU);
    const Matrix x = feature_matrix(data.dataset, al.frames, FeatureSelector::Embeddings);
    BitMatrix y(x.rows(), kNumActionUnits);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (int u = 0; u < kNumActionUnits; ++u) y(i, u) = al.au[i][u];
    TrainConfig c;
    c.epochs = 400;
    c.batch_size = 64;
    c.hidden_size = 64;
    c.learning_rate = 0.1;
    c.seed = 2;
    c.class_weights = std::vector<double>(kNumActionUnits, 1.0);
    const auto r = train_au_head(FeatureSelector::Embeddings, {x, y}, c);
    const BitMatrix pred = (predict_proba(r.model, x).array() >= 0.5).cast<std::uint8_t>().matrix();
    const auto f1 = multilabel_f1(pred, y);
    for (int u = 0; u < kNumActionUnits; ++u) {
      CAPTURE(u);
      // Units that never fire in the sample have F1 0 by convention.
      if (y.col(u).cast<int>().sum() > 0) CHECK(f1.per_class_f1[u] >= 0.99);
    }
    const auto again = train_au_head(FeatureSelector::Embeddings, {x, y}, c);
    CHECK(head_to_json(again.model) == head_to_json(r.model));
  }

  TEST_CASE("all-zero AU labels drive scores low") {
    std::mt19937_64 gen(23);
    const Matrix x = oracle::random_matrix(gen, 300, 5);
    const BitMatrix y = BitMatrix::Zero(300, 12);
    TrainConfig c;
    c.epochs = 100;
    c.batch_size = 32;
    c.hidden_size = 8;
    c.learning_rate = 0.1;
    const auto r = train_au_head(FeatureSelector::Embeddings, {x, y}, c);
    CHECK(r.warnings.size() == 12);
    CHECK(predict_proba(r.model, x).mean() < 0.05);
  }

  TEST_CASE("softmax properties") {
    std::mt19937_64 gen(24);
    auto m = init_head(FeatureSelector::Embeddings, 5, 6, 8, OutputActivation::Softmax, 3);
    const Matrix x = oracle::random_matrix(gen, 40, 5);
    const Matrix p = predict_proba(m, x);
    for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
    // Pre-softmax activations, computed by hand.
    const Matrix h = ((x * m.hidden->weight.transpose()).rowwise() + m.hidden->bias.transpose()).cwiseMax(0.0);
    const Matrix z = (h * m.output.weight.transpose()).rowwise() + m.output.bias.transpose();
    CHECK(argmax_rows(p) == argmax_rows(z));
    m.output.weight.setZero();
    const Matrix u = predict_proba(m, x);
    CHECK((u.array() - 0.125).abs().maxCoeff() <= 1e-15);

    const auto s = init_head(FeatureSelector::Embeddings, 5, 6, 12, OutputActivation::Sigmoid, 3);
    const Matrix q = predict_proba(s, x);
    CHECK((q.array() > 0.0).all());
    CHECK((q.array() < 1.0).all());
  }

  TEST_CASE("adapter examples") {
    std::vector<double> l(8, 0.0);
    CHECK(adapt_pretrained_logits(l, 1.0) == kOtherClass);
    l = {0, 9, 0, 0, 5, 0, 0, 0};  // Contempt peak, Happiness second
    CHECK(kExprClassNames[adapt_pretrained_logits(l, 0.0)] == "Happiness");
    l = {9, 0, 0, 0, 0, 0, 0, 0};
    CHECK(kExprClassNames[adapt_pretrained_logits(l, 0.0)] == "Anger");
    const int expected[8] = {1, -1, 2, 3, 4, 0, 5, 6};
    for (int i = 0; i < 8; ++i) {
      if (i == 1) continue;
      std::vector<double> one(8, 0.0);
      one[i] = 1.0;
      CHECK(adapt_pretrained_logits(one, 0.0) == expected[i]);
    }
  }
}
