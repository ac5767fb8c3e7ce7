#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "beamtrack/embedding.hpp"
#include "beamtrack/rng.hpp"

using namespace beamtrack;

namespace {

Mat gaussian_data(Rng& rng, int n, int d, Real spread = 1.0) {
  Mat X(n, d);
  for (Eigen::Index i = 0; i < X.size(); ++i)
    X.data()[i] = spread * rng.normal();
  return X;
}

}  // namespace

TEST_SUITE("embedding") {
  TEST_CASE("pca matches a covariance eigendecomposition oracle") {
    Rng rng(41);
    const int n = 60, d = 12, k = 5;
    // Anisotropic data so the spectrum is well separated.
    Mat X = gaussian_data(rng, n, d);
    for (int j = 0; j < d; ++j)
      X.col(j) *= 1.0 + 0.5 * j;

    const PcaModel model = pca_fit(X, k);
    REQUIRE(model.out_dim() == k);
    REQUIRE(model.in_dim() == d);

    const Vec mean = X.colwise().mean().transpose();
    const Mat centered = X.rowwise() - mean.transpose();
    const Mat cov = centered.transpose() * centered / Real(n);
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    REQUIRE(es.info() == Eigen::Success);
    const Vec evals = es.eigenvalues();  // ascending

    for (int i = 0; i < k; ++i)
      CHECK(model.explained_variance(i) ==
            doctest::Approx(evals(d - 1 - i)).epsilon(1e-9));

    // Mean reconstruction error equals the discarded eigenvalue mass.
    double err = 0.0;
    for (int j = 0; j < n; ++j) {
      const Vec x = X.row(j).transpose();
      err += (x - pca_reconstruct(model, pca_embed(model, x))).squaredNorm();
    }
    err /= n;
    CHECK(err == doctest::Approx(evals.head(d - k).sum()).epsilon(1e-9));

    const Mat gram = model.components * model.components.transpose();
    CHECK((gram - Mat::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-10);

    // Sign convention: the dominant entry of each component is positive.
    for (int i = 0; i < k; ++i) {
      Eigen::Index arg = 0;
      model.components.row(i).cwiseAbs().maxCoeff(&arg);
      CHECK(model.components(i, arg) > 0.0);
    }

    const Mat Z = pca_embed_batch(model, X);
    for (int j = 0; j < n; ++j)
      CHECK((Z.row(j).transpose() - pca_embed(model, X.row(j).transpose()))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
  }

  TEST_CASE("full-rank pca reconstructs exactly") {
    Rng rng(42);
    const Mat X = gaussian_data(rng, 30, 6);
    const PcaModel model = pca_fit(X, 6);
    double err = 0.0;
    for (int j = 0; j < 30; ++j) {
      const Vec x = X.row(j).transpose();
      err = std::max(err, (x - pca_reconstruct(model, pca_embed(model, x))).cwiseAbs().maxCoeff());
    }
    CHECK(err < 1e-10);
    CHECK(model.explained_variance.sum() ==
          doctest::Approx((X.rowwise() - X.colwise().mean()).squaredNorm() / 30.0)
              .epsilon(1e-10));

    // Projecting the mean lands on the zero embedding.
    const Vec mean = X.colwise().mean().transpose();
    CHECK(pca_embed(model, mean).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("pca validates its inputs") {
    Rng rng(43);
    const Mat X = gaussian_data(rng, 10, 4);
    CHECK_THROWS_AS(pca_fit(X, 0), ConfigError);
    CHECK_THROWS_AS(pca_fit(X, 5), ConfigError);
    const PcaModel model = pca_fit(X, 2);
    CHECK_THROWS_AS(pca_embed(model, Vec::Zero(3)), ContractError);
    CHECK_THROWS_AS(pca_embed_batch(model, Mat::Zero(2, 5)), ContractError);
    CHECK_THROWS_AS(pca_reconstruct(model, Vec::Zero(3)), ContractError);
  }

  TEST_CASE("a full-width linear autoencoder reaches a near-zero floor") {
    Rng rng(44);
    const Mat X = gaussian_data(rng, 80, 5);
    EmbedTrainOptions opts;
    opts.hidden = 12;
    opts.epochs = 400;
    opts.learning_rate = 0.01;
    opts.batch_size = 80;
    opts.activation = nn::Activation::linear;
    const AeModel model = ae_train(X, 5, opts);
    REQUIRE(model.epoch_losses.size() == 400);
    CHECK(model.epoch_losses.back() < 1e-3);
    CHECK(model.epoch_losses.back() < model.epoch_losses.front() / 50);
    CHECK(model.bottleneck() == 5);

    const Mat recon = model.reconstruct(X);
    const Real mse = (recon - X).squaredNorm() / X.size();
    CHECK(mse < 1e-3);
  }

  TEST_CASE("an absurd learning rate makes the autoencoder fail loudly") {
    Rng rng(45);
    const Mat X = gaussian_data(rng, 40, 4);
    EmbedTrainOptions opts;
    opts.hidden = 8;
    opts.epochs = 5;
    opts.learning_rate = 1e80;
    opts.batch_size = 40;
    opts.activation = nn::Activation::linear;
    CHECK_THROWS_AS(ae_train(X, 2, opts), TrainingError);
  }

  TEST_CASE("classifier embedder shapes and training signal") {
    Rng rng(46);
    const int n = 40, d = 8, q = 10, k = 3;
    const Mat X = gaussian_data(rng, n, d);
    std::vector<std::vector<int>> beam_sets(n);
    for (int i = 0; i < n; ++i)
      beam_sets[i] = {i % q, (i * 3 + 1) % q};

    EmbedTrainOptions opts;
    opts.hidden = 16;
    opts.epochs = 60;
    opts.learning_rate = 0.01;
    opts.batch_size = 40;
    const ClsModel model = cls_train(X, beam_sets, q, k, opts);
    CHECK(model.embed_batch(X).cols() == k);
    CHECK(model.logits(X).cols() == q);
    CHECK(model.num_beams() == q);
    CHECK(model.epoch_losses.back() < model.epoch_losses.front());

    CHECK_THROWS_AS(cls_train(X, beam_sets, 5, k, opts), DataError);  // beam 5.. out of range
    CHECK_THROWS_AS(cls_train(X, {{0}}, q, k, opts), ContractError);
    CHECK_THROWS_AS(cls_train(X, beam_sets, q, 0, opts), ConfigError);
  }

  TEST_CASE("embedder options validate and round-trip") {
    EmbedTrainOptions opts;
    opts.hidden = 64;
    opts.activation = nn::Activation::tanh;
    const EmbedTrainOptions back = EmbedTrainOptions::from_json(opts.to_json());
    CHECK(back.to_json() == opts.to_json());

    EmbedTrainOptions bad;
    bad.hidden = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = EmbedTrainOptions{};
    bad.learning_rate = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("feature maps flow through the uniform embedder interface") {
    Rng rng(47);
    const Mat X = gaussian_data(rng, 30, 12);
    auto embedder = make_pca_embedder(pca_fit(X, 4));
    CHECK(embedder->kind() == "pca");
    CHECK(embedder->in_dim() == 12);
    CHECK(embedder->dim() == 4);

    FeatureMap fm(2, 2, 3);
    for (size_t i = 0; i < fm.values.size(); ++i)
      fm.values[i] = Real(i) * 0.1;
    const Vec got = embed_image(*embedder, fm);
    CHECK((got - embedder->embed_flat(fm.flatten())).cwiseAbs().maxCoeff() == 0.0);

    FeatureMap wrong(2, 2, 2);
    CHECK_THROWS_AS(embed_image(*embedder, wrong), ContractError);
  }

  TEST_CASE("all embedder kinds serialize and reload bit-exactly") {
    Rng rng(48);
    const int d = 10;
    const Mat X = gaussian_data(rng, 50, d);
    EmbedTrainOptions opts;
    opts.hidden = 8;
    opts.epochs = 3;
    opts.batch_size = 25;

    std::vector<std::vector<int>> beam_sets(50);
    for (int i = 0; i < 50; ++i)
      beam_sets[i] = {i % 6};

    std::vector<std::unique_ptr<ImageEmbedder>> embedders;
    embedders.push_back(make_pca_embedder(pca_fit(X, 3)));
    embedders.push_back(make_ae_embedder(ae_train(X, 3, opts)));
    embedders.push_back(make_cls_embedder(cls_train(X, beam_sets, 6, 3, opts)));

    for (const auto& e : embedders) {
      json meta;
      std::vector<double> payload;
      e->save(meta, payload);
      size_t pos = 0;
      const auto back = load_embedder(meta, payload, pos);
      CHECK(pos == payload.size());
      CHECK(back->kind() == e->kind());
      CHECK(back->dim() == e->dim());
      for (int round = 0; round < 3; ++round) {
        Vec x(d);
        for (int i = 0; i < d; ++i)
          x(i) = rng.normal();
        CHECK((back->embed_flat(x) - e->embed_flat(x)).cwiseAbs().maxCoeff() == 0.0);
      }
    }

    size_t pos = 0;
    CHECK_THROWS_AS(load_embedder({{"kind", "wavelet"}}, {}, pos), CheckpointError);
  }
}
