#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "shiftselect/classifiers.hpp"

using namespace shiftselect;

namespace {

LabelledSet separable_blobs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  Matrix x(static_cast<Eigen::Index>(n), 2);
  Labels y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    x(static_cast<Eigen::Index>(i), 0) = (c == 0 ? -2.0 : 2.0) + g(rng);
    x(static_cast<Eigen::Index>(i), 1) = g(rng);
    y[i] = c;
  }
  return LabelledSet(fixture::make_dataset(x, y, 2));
}

double relative_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

}  // namespace

TEST_SUITE("classifiers") {
  TEST_CASE("class weight candidates for n=3 use exact 2/3 and 1/6") {
    const auto c = class_weight_candidates(3);
    REQUIRE(c.size() == 5);
    CHECK(c[0].mode == ClassWeights::Mode::Balanced);
    CHECK(c[1].mode == ClassWeights::Mode::None);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& v = *c[2 + k].explicit_weights;
      for (std::size_t j = 0; j < 3; ++j) CHECK(v[j] == doctest::Approx(j == k ? 2.0 / 3.0 : 1.0 / 6.0).epsilon(1e-15));
    }
  }

  TEST_CASE("class weight candidates for n=2 follow the grid (0.2, 0.4, 0.6, 0.8)") {
    const auto c = class_weight_candidates(2);
    REQUIRE(c.size() == 6);
    const double g[] = {0.2, 0.4, 0.6, 0.8};
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& v = *c[2 + k].explicit_weights;
      CHECK(v[0] == doctest::Approx(g[k]));
      CHECK(v[1] == doctest::Approx(1.0 - g[k]));
    }
  }

  TEST_CASE("every explicit candidate sums to one") {
    for (std::size_t n = 2; n <= 7; ++n)
      for (const auto& w : class_weight_candidates(n)) {
        CHECK((w.mode == ClassWeights::Mode::Explicit) == w.explicit_weights.has_value());
        if (w.explicit_weights) {
          double s = 0.0;
          for (double v : *w.explicit_weights) s += v;
          CHECK(std::abs(s - 1.0) <= 1e-12);
        }
      }
  }

  TEST_CASE("class multipliers") {
    const std::vector<std::size_t> counts{30, 10};
    const auto b = ClassWeights::balanced().class_multipliers(counts);
    CHECK(b[0] == doctest::Approx(40.0 / 60.0));
    CHECK(b[1] == doctest::Approx(2.0));
    CHECK(ClassWeights::none().class_multipliers(counts) == std::vector<double>{1.0, 1.0});
    const auto e = ClassWeights::explicit_vector(PrevalenceVector({0.2, 0.8})).class_multipliers(counts);
    CHECK(e[0] == doctest::Approx(0.4));
    CHECK(e[1] == doctest::Approx(1.6));
  }

  TEST_CASE("grid sizes") {
    CHECK(build_grid(Family::LR, 2).size() == 30);
    for (std::size_t n = 3; n <= 6; ++n) CHECK(build_grid(Family::LR, n).size() == (n + 2) * 5);
    for (std::size_t n = 2; n <= 6; ++n) {
      CHECK(build_grid(Family::KNN, n).size() == 10);
      CHECK(build_grid(Family::MLP, n).size() == 10);
    }
  }

  TEST_CASE("grid values") {
    std::set<double> cs;
    for (const auto& hp : build_grid(Family::LR, 3)) cs.insert(std::get<LrParams>(hp.params).C);
    CHECK(cs == std::set<double>{1e-2, 1e-1, 1.0, 1e1, 1e2});
    std::set<int> ks;
    for (const auto& hp : build_grid(Family::KNN, 3)) ks.insert(std::get<KnnParams>(hp.params).n_neighbors);
    CHECK(ks == std::set<int>{5, 7, 9, 11, 13});
    std::set<double> alphas;
    for (const auto& hp : build_grid(Family::MLP, 3)) alphas.insert(std::get<MlpParams>(hp.params).alpha);
    CHECK(alphas == std::set<double>{1e-5, 1e-4, 1e-3, 1e-2, 1e-1});
  }

  TEST_CASE("defaults are declared values and sit inside their grids") {
    CHECK(std::get<LrParams>(default_model(Family::LR).params).C == 1.0);
    CHECK(std::get<LrParams>(default_model(Family::LR).params).class_weight == ClassWeights::none());
    CHECK(std::get<KnnParams>(default_model(Family::KNN).params).n_neighbors == 5);
    CHECK(std::get<KnnParams>(default_model(Family::KNN).params).weights == KnnWeighting::Uniform);
    CHECK(std::get<MlpParams>(default_model(Family::MLP).params).alpha == 1e-4);
    CHECK(std::get<MlpParams>(default_model(Family::MLP).params).learning_rate == LearningRate::Constant);
    for (Family f : kAllFamilies)
      for (std::size_t n : {2u, 3u, 5u}) {
        const auto grid = build_grid(f, n);
        CHECK(std::count(grid.begin(), grid.end(), default_model(f)) == 1);
      }
  }

  TEST_CASE("hyperparameters round-trip through JSON") {
    for (Family f : kAllFamilies)
      for (const auto& hp : build_grid(f, 3)) CHECK(HyperParams::from_json(hp.to_json()) == hp);
    CHECK_THROWS(HyperParams::from_json(nlohmann::json{{"family", "SVM"}}));
    CHECK(parse_family("KNN") == Family::KNN);
    CHECK_THROWS(parse_family("svm"));
  }

  TEST_CASE("argmax tie-break and softmax") {
    Matrix p(3, 2);
    p << 0.2, 0.8, 0.5, 0.5, 0.9, 0.1;
    CHECK(argmax_rows(p) == Labels{1, 0, 0});
    const Matrix s = softmax_rows(Matrix::Zero(2, 4));
    CHECK((s.array() - 0.25).abs().maxCoeff() < 1e-15);
    Matrix big(1, 2);
    big << 1000.0, 0.0;
    CHECK(softmax_rows(big)(0, 0) == doctest::Approx(1.0));
  }

  TEST_CASE("LR on separable blobs reaches training accuracy 1") {
    const auto data = separable_blobs(80, 1);
    HyperParams hp{LrParams{1.0, ClassWeights::none()}};
    const auto m = train(hp, data, 0);
    const auto pred = m.predict_labels(data.features());
    CHECK(pred == data.labels());
    CHECK(m.info().epochs >= 1);
  }

  TEST_CASE("LR with zero weights gives the uniform posterior") {
    LinearWeights w{Matrix::Zero(4, 3), Vector::Zero(3)};
    TrainedModel m(default_model(Family::LR), 3, 4, 0, {}, w);
    const Matrix p = m.predict_posteriors(fixture::random_matrix(5, 4, 2));
    CHECK((p.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
  }

  TEST_CASE("KNN unanimous neighbourhood and self-neighbour training accuracy") {
    Matrix x(8, 1);
    x << 0, 0.1, 0.2, 0.3, 0.4, 10, 10.1, 10.2;
    Labels y{1, 1, 1, 1, 1, 0, 0, 0};
    auto d = fixture::make_dataset(x, y, 2);
    const auto m = train(HyperParams{KnnParams{5, KnnWeighting::Uniform}}, LabelledSet(d), 0);
    Matrix q(1, 1);
    q << 0.2;
    const Matrix p = m.predict_posteriors(q);
    CHECK(p(0, 0) == 0.0);
    CHECK(p(0, 1) == 1.0);

    const auto data = fixture::all_of(fixture::gaussians(3, 2, {0.5, 0.3, 0.2}, 300, 1.0, 7));
    const auto knn = train(HyperParams{KnnParams{5, KnnWeighting::Uniform}}, data, 0);
    const auto counts = data.class_counts();
    const double majority =
        static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(data.size());
    const auto pred = knn.predict_labels(data.features());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.label(i);
    CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= majority);
  }

  TEST_CASE("KNN distance weighting") {
    Matrix x(3, 1);
    x << 0.0, 1.0, 3.0;
    auto d = fixture::make_dataset(x, Labels{0, 1, 1}, 2);
    TrainedModel m(HyperParams{KnnParams{3, KnnWeighting::Distance}}, 2, 1, 0, {}, NeighbourStore{x, Labels{0, 1, 1}});
    Matrix q(1, 1);
    q << 0.5;
    const Matrix p = m.predict_posteriors(q);
    const double w0 = 1.0 / (0.5 + 1e-9), w1 = 1.0 / (0.5 + 1e-9), w2 = 1.0 / (2.5 + 1e-9);
    CHECK(p(0, 0) == doctest::Approx(w0 / (w0 + w1 + w2)));
    // An exact duplicate does not divide by zero.
    Matrix on(1, 1);
    on << 0.0;
    CHECK(std::isfinite(m.predict_posteriors(on)(0, 0)));
  }

  TEST_CASE("posterior rows sum to one and labels agree with posteriors") {
    const auto data = fixture::all_of(fixture::gaussians(3, 4, {0.4, 0.3, 0.3}, 150, 1.5, 3));
    const Matrix q = fixture::random_matrix(100, 4, 9, 2.0);
    for (Family f : kAllFamilies) {
      const auto m = train(default_model(f), data, 5);
      const Matrix p = m.predict_posteriors(q);
      CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
      CHECK(p.minCoeff() >= 0.0);
      CHECK(m.predict_labels(q) == argmax_rows(p));
      CHECK_THROWS(m.predict_posteriors(Matrix::Zero(2, 3)));
    }
  }

  TEST_CASE("LR gradient matches finite differences") {
    const auto data = fixture::all_of(fixture::gaussians(3, 4, {0.4, 0.3, 0.3}, 60, 1.0, 2));
    const Matrix x = data.features();
    const Labels y = data.labels();
    std::vector<double> sw(y.size());
    for (std::size_t i = 0; i < sw.size(); ++i) sw[i] = 0.5 + 0.1 * static_cast<double>(i % 7);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Vector theta = fixture::random_matrix(15, 1, 100 + s).col(0);
      const auto obj = lr_objective(theta, x, y, sw, 0.7, 3);
      const auto fd = oracle::fd_gradient([&](const Vector& t) { return lr_objective(t, x, y, sw, 0.7, 3).value; },
                                          theta, 1e-5);
      CHECK(relative_error(obj.gradient, fd) < 1e-4);
    }
  }

  TEST_CASE("MLP gradient matches finite differences") {
    const auto data = fixture::all_of(fixture::gaussians(3, 3, {0.4, 0.3, 0.3}, 40, 1.0, 2));
    const Matrix x = data.features();
    const Labels y = data.labels();
    const std::size_t hidden = 6;
    const std::size_t dim = 3 * hidden + hidden + hidden * 3 + 3;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Vector theta = fixture::random_matrix(dim, 1, 200 + s, 0.5).col(0);
      const auto obj = mlp_objective(theta, x, y, 1e-2, hidden, 3);
      const auto fd = oracle::fd_gradient(
          [&](const Vector& t) { return mlp_objective(t, x, y, 1e-2, hidden, 3).value; }, theta, 1e-5);
      CHECK(relative_error(obj.gradient, fd) < 1e-4);
    }
  }

  TEST_CASE("LR objective is convex along random chords") {
    const auto data = fixture::all_of(fixture::gaussians(2, 3, {0.5, 0.5}, 50, 1.0, 4));
    const Matrix x = data.features();
    const Labels y = data.labels();
    const std::vector<double> sw(y.size(), 1.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Vector a = fixture::random_matrix(8, 1, 300 + s, 3.0).col(0);
      const Vector b = fixture::random_matrix(8, 1, 400 + s, 3.0).col(0);
      const double mid = lr_objective((a + b) / 2.0, x, y, sw, 1.0, 2).value;
      const double avg = (lr_objective(a, x, y, sw, 1.0, 2).value + lr_objective(b, x, y, sw, 1.0, 2).value) / 2.0;
      CHECK(mid <= avg + 1e-9);
    }
  }

  TEST_CASE("uniform explicit weights reproduce the unweighted LR") {
    const auto data = fixture::all_of(fixture::gaussians(3, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 150, 1.0, 8));
    const auto none = train(HyperParams{LrParams{1.0, ClassWeights::none()}}, data, 0);
    const auto uni = train(HyperParams{LrParams{1.0, ClassWeights::explicit_vector(PrevalenceVector::uniform(3))}}, data, 0);
    const auto& a = std::get<LinearWeights>(none.parameters());
    const auto& b = std::get<LinearWeights>(uni.parameters());
    CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() < 1e-4);
    CHECK((a.bias - b.bias).cwiseAbs().maxCoeff() < 1e-4);
    // Balanced data: balanced weights are neutral too.
    const auto bal = train(HyperParams{LrParams{1.0, ClassWeights::balanced()}}, data, 0);
    CHECK((std::get<LinearWeights>(bal.parameters()).weights - a.weights).cwiseAbs().maxCoeff() < 1e-4);
  }

  TEST_CASE("LR converges to a stationary point") {
    const auto data = fixture::all_of(fixture::gaussians(3, 3, {0.5, 0.3, 0.2}, 200, 1.0, 8));
    const auto m = train(HyperParams{LrParams{0.1, ClassWeights::none()}}, data, 0);
    const Vector theta = flatten(std::get<LinearWeights>(m.parameters()));
    const std::vector<double> sw(data.size(), 1.0);
    const auto obj = lr_objective(theta, data.features(), data.labels(), sw, 0.1, 3);
    CHECK(obj.gradient.cwiseAbs().maxCoeff() < 1e-5);
    CHECK(m.info().epochs < 1000);
  }

  TEST_CASE("training is deterministic given the seed") {
    const auto data = fixture::all_of(fixture::gaussians(3, 3, {0.5, 0.3, 0.2}, 120, 1.0, 9));
    for (Family f : kAllFamilies) {
      const auto a = train(default_model(f), data, 77);
      const auto b = train(default_model(f), data, 77);
      std::ostringstream sa, sb;
      a.to_record().write(sa);
      b.to_record().write(sb);
      CHECK(sa.str() == sb.str());
    }
    const auto m1 = train(default_model(Family::MLP), data, 1);
    const auto m2 = train(default_model(Family::MLP), data, 2);
    CHECK((std::get<MlpWeights>(m1.parameters()).hidden_weights - std::get<MlpWeights>(m2.parameters()).hidden_weights)
              .cwiseAbs()
              .maxCoeff() > 0.0);
  }

  TEST_CASE("MLP learns a separable problem and the adaptive schedule runs") {
    const auto data = separable_blobs(80, 3);
    const auto c = train(HyperParams{MlpParams{1e-4, LearningRate::Constant}}, data, 0);
    const auto a = train(HyperParams{MlpParams{1e-4, LearningRate::Adaptive}}, data, 0);
    CHECK(c.predict_labels(data.features()) == data.labels());
    CHECK(a.predict_labels(data.features()) == data.labels());
    CHECK(c.info().epochs == 200);
    CHECK(a.info().epochs <= 200);
    const auto& w = std::get<MlpWeights>(c.parameters());
    CHECK(w.hidden_weights.cols() == static_cast<Eigen::Index>(kMlpHiddenUnits));
  }

  TEST_CASE("model records round-trip bit-exactly") {
    const auto data = fixture::all_of(fixture::gaussians(3, 3, {0.5, 0.3, 0.2}, 90, 1.0, 9));
    for (Family f : kAllFamilies) {
      const auto m = train(build_grid(f, 3).back(), data, 5);
      std::ostringstream s1;
      m.to_record().write(s1);
      std::istringstream in(s1.str());
      const auto back = TrainedModel::from_record(BinaryRecord::read(in));
      std::ostringstream s2;
      back.to_record().write(s2);
      CHECK(s1.str() == s2.str());
      CHECK(back.hyperparams() == m.hyperparams());
      CHECK(back.seed() == m.seed());
      const Matrix q = fixture::random_matrix(20, 3, 1);
      CHECK((back.predict_posteriors(q).array() == m.predict_posteriors(q).array()).all());
    }
  }

  TEST_CASE("binary record rejects corrupt input") {
    BinaryRecord r;
    r.header = {{"kind", "x"}};
    r.arrays["a"] = Matrix::Constant(2, 3, 1.5);
    std::ostringstream out;
    r.write(out);
    std::string bytes = out.str();
    std::istringstream ok(bytes);
    const auto back = BinaryRecord::read(ok);
    CHECK(back.array("a") == r.arrays["a"]);
    CHECK_THROWS(back.array("missing"));
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream b1(bad);
    CHECK_THROWS(BinaryRecord::read(b1));
    std::istringstream b2(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS(BinaryRecord::read(b2));
  }
}
