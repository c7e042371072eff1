#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "aciec/contrastive.hpp"
#include "test_util.hpp"

using namespace aciec;
using anp::LabeledEmbeddingBatch;
using anp::LabelView;
using encoders::EmbeddingVector;

namespace {

LabeledEmbeddingBatch batch_of(std::vector<std::vector<double>> vecs,
                               std::vector<core::ANPLabel> labels) {
    LabeledEmbeddingBatch b;
    for (auto& v : vecs) b.embeddings.push_back(EmbeddingVector{std::move(v)});
    b.anp_labels = std::move(labels);
    return b;
}

std::vector<double> flatten_embeddings(const LabeledEmbeddingBatch& b) {
    std::vector<double> flat;
    for (const auto& e : b.embeddings)
        flat.insert(flat.end(), e.values.begin(), e.values.end());
    return flat;
}

LabeledEmbeddingBatch with_embeddings(LabeledEmbeddingBatch b,
                                      const std::vector<double>& flat) {
    size_t dim = b.embeddings[0].dim();
    for (size_t i = 0; i < b.size(); ++i)
        b.embeddings[i].values.assign(flat.begin() + i * dim, flat.begin() + (i + 1) * dim);
    return b;
}

std::vector<double> flatten_grads(const anp::GradientSet& g) {
    std::vector<double> flat;
    for (const auto& row : g) flat.insert(flat.end(), row.begin(), row.end());
    return flat;
}

}  // namespace

TEST_CASE("equal-score closed form: identical embeddings, one label") {
    auto b = batch_of({{1, 0}, {1, 0}, {1, 0}},
                      {{"cute", "dog"}, {"cute", "dog"}, {"cute", "dog"}});
    for (double tau : {0.07, 0.5, 2.0}) {
        auto r = anp::supervised_contrastive_loss(b, LabelView::Anp, tau);
        CHECK(r.loss == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-9));
        for (double term : r.per_anchor) CHECK(term == doctest::Approx(std::log(2.0)));
    }
}

TEST_CASE("closed form BS*log(BS-1) for sizes 3..10 in both views") {
    for (size_t bs = 3; bs <= 10; ++bs) {
        LabeledEmbeddingBatch b;
        for (size_t i = 0; i < bs; ++i) {
            b.embeddings.push_back(EmbeddingVector{{0.6, 0.8}});
            b.anp_labels.push_back({"shiny", "star"});
        }
        double expected = bs * std::log(double(bs) - 1.0);
        CHECK(anp::supervised_contrastive_loss(b, LabelView::Anp, 0.07).loss ==
              doctest::Approx(expected).epsilon(1e-9));
        CHECK(anp::supervised_contrastive_loss(b, LabelView::Noun, 0.07).loss ==
              doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("no shared labels gives zero loss") {
    std::mt19937_64 rng(3);
    LabeledEmbeddingBatch b;
    for (int i = 0; i < 4; ++i) {
        b.embeddings.push_back(testutil::random_unit_vector(8, rng));
        b.anp_labels.push_back({"adj" + std::to_string(i), "noun" + std::to_string(i)});
    }
    auto r = anp::supervised_contrastive_loss(b, LabelView::Anp, 0.07);
    CHECK(r.loss == 0.0);
    CHECK(anp::supervised_contrastive_loss(b, LabelView::Noun, 0.07).loss == 0.0);
    CHECK(anp::hierarchical_loss(b, 0.07) == 0.0);
}

TEST_CASE("labels {A,A,B,B} at tau=0.1 match the naive oracle") {
    std::mt19937_64 rng(17);
    LabeledEmbeddingBatch b;
    for (int i = 0; i < 4; ++i) {
        b.embeddings.push_back(testutil::random_unit_vector(6, rng));
        b.anp_labels.push_back(i < 2 ? core::ANPLabel{"a", "x"} : core::ANPLabel{"b", "y"});
    }
    CHECK(anp::supervised_contrastive_loss(b, LabelView::Anp, 0.1).loss ==
          doctest::Approx(testutil::naive_supcon_loss(b, LabelView::Anp, 0.1))
              .epsilon(1e-9));
}

TEST_CASE("oracle equivalence over many random batches") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        size_t bs = 2 + trial % 15;
        auto b = testutil::random_batch(bs, 8, 3, 2, rng);
        for (LabelView view : {LabelView::Noun, LabelView::Anp}) {
            double got = anp::supervised_contrastive_loss(b, view, 0.07).loss;
            double want = testutil::naive_supcon_loss(b, view, 0.07);
            CHECK(std::abs(got - want) < 1e-9);
        }
    }
}

TEST_CASE("temperature washout converges to BS*log(BS-1)") {
    std::mt19937_64 rng(21);
    LabeledEmbeddingBatch b;
    for (int i = 0; i < 5; ++i) {
        b.embeddings.push_back(testutil::random_unit_vector(8, rng));
        b.anp_labels.push_back({"warm", "light"});
    }
    double expected = 5.0 * std::log(4.0);
    CHECK(anp::supervised_contrastive_loss(b, LabelView::Anp, 1e6).loss ==
          doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("permutation invariance of the total loss") {
    std::mt19937_64 rng(7);
    auto b = testutil::random_batch(9, 8, 2, 2, rng);
    double base = anp::supervised_contrastive_loss(b, LabelView::Anp, 0.07).loss;
    std::vector<size_t> order(b.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    LabeledEmbeddingBatch shuffled;
    for (size_t i : order) {
        shuffled.embeddings.push_back(b.embeddings[i]);
        shuffled.anp_labels.push_back(b.anp_labels[i]);
    }
    CHECK(anp::supervised_contrastive_loss(shuffled, LabelView::Anp, 0.07).loss ==
          doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("input validation") {
    auto tiny = batch_of({{1, 0}}, {{"a", "b"}});
    CHECK_THROWS_AS(anp::supervised_contrastive_loss(tiny, LabelView::Anp, 0.07),
                    DataError);
    auto ok = batch_of({{1, 0}, {0, 1}}, {{"a", "b"}, {"a", "b"}});
    CHECK_THROWS_AS(anp::supervised_contrastive_loss(ok, LabelView::Anp, 0.0), DataError);
    CHECK_THROWS_AS(anp::supervised_contrastive_loss(ok, LabelView::Anp, -1.0), DataError);
}

TEST_CASE("hierarchical loss: all one ANP equals either level") {
    std::mt19937_64 rng(31);
    LabeledEmbeddingBatch b;
    for (int i = 0; i < 4; ++i) {
        b.embeddings.push_back(testutil::random_unit_vector(8, rng));
        b.anp_labels.push_back({"calm", "sea"});
    }
    double anp_level = anp::supervised_contrastive_loss(b, LabelView::Anp, 0.07).loss;
    double noun_level = anp::supervised_contrastive_loss(b, LabelView::Noun, 0.07).loss;
    CHECK(anp_level == doctest::Approx(noun_level).epsilon(1e-12));
    CHECK(anp::hierarchical_loss(b, 0.07) == doctest::Approx(anp_level).epsilon(1e-12));
}

TEST_CASE("hierarchical loss on the mixed cat/dog batch matches the oracle") {
    std::mt19937_64 rng(41);
    LabeledEmbeddingBatch b;
    for (int i = 0; i < 4; ++i) b.embeddings.push_back(testutil::random_unit_vector(8, rng));
    b.anp_labels = {{"ugly", "cat"}, {"ugly", "cat"}, {"adorable", "cat"}, {"cute", "dog"}};
    double noun = testutil::naive_supcon_loss(b, LabelView::Noun, 0.07);
    double anp = testutil::naive_supcon_loss(b, LabelView::Anp, 0.07);
    CHECK(anp::hierarchical_loss(b, 0.07) ==
          doctest::Approx(0.5 * (noun + anp)).epsilon(1e-9));
}

TEST_CASE("cross entropy closed forms") {
    // uniform logits over C classes -> log(C)
    for (size_t c : {2, 5, 8}) {
        std::vector<std::vector<double>> logits = {std::vector<double>(c, 0.3)};
        CHECK(anp::cross_entropy(logits, {0}) ==
              doctest::Approx(std::log(double(c))).epsilon(1e-12));
    }
    // confident correct logits -> ~0
    std::vector<std::vector<double>> confident = {{100.0, 0.0}, {0.0, 100.0}};
    CHECK(anp::cross_entropy(confident, {0, 1}) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("detector loss combines CE and contrastive terms") {
    std::mt19937_64 rng(51);
    // unique nouns -> L_con = 0; confident logits -> CE ~ 0
    LabeledEmbeddingBatch b;
    std::vector<std::vector<double>> logits;
    std::vector<int> targets;
    for (int i = 0; i < 3; ++i) {
        b.embeddings.push_back(testutil::random_unit_vector(8, rng));
        b.anp_labels.push_back({"adj", "noun" + std::to_string(i)});
        std::vector<double> row(3, -50.0);
        row[i] = 50.0;
        logits.push_back(row);
        targets.push_back(i);
    }
    CHECK(anp::detector_loss(b, logits, targets, 0.07) == doctest::Approx(0.0).epsilon(1e-6));

    // uniform logits -> log(C) + L_con
    std::vector<std::vector<double>> uniform(3, std::vector<double>(3, 0.0));
    b.anp_labels = {{"a", "n"}, {"a", "n"}, {"b", "n"}};
    double con = 0.5 * (testutil::naive_supcon_loss(b, LabelView::Noun, 0.07) +
                        testutil::naive_supcon_loss(b, LabelView::Anp, 0.07));
    CHECK(anp::detector_loss(b, uniform, targets, 0.07) ==
          doctest::Approx(std::log(3.0) + con).epsilon(1e-9));

    CHECK_THROWS_AS(anp::detector_loss(b, uniform, {0, 1}, 0.07), DataError);
}

TEST_CASE("supervised contrastive gradient matches finite differences") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        auto b = testutil::random_batch(5, 4, 2, 2, rng);
        for (LabelView view : {LabelView::Noun, LabelView::Anp}) {
            auto analytic = flatten_grads(anp::supervised_contrastive_grad(b, view, 0.07));
            auto numeric = testutil::finite_differences(
                flatten_embeddings(b), [&](const std::vector<double>& flat) {
                    return anp::supervised_contrastive_loss(with_embeddings(b, flat), view,
                                                            0.07)
                        .loss;
                });
            CHECK(testutil::max_relative_error(analytic, numeric) < 1e-4);
        }
    }
}

TEST_CASE("hierarchical gradient matches finite differences") {
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 10; ++trial) {
        auto b = testutil::random_batch(6, 4, 2, 2, rng);
        auto analytic = flatten_grads(anp::hierarchical_grad(b, 0.07));
        auto numeric = testutil::finite_differences(
            flatten_embeddings(b), [&](const std::vector<double>& flat) {
                return anp::hierarchical_loss(with_embeddings(b, flat), 0.07);
            });
        CHECK(testutil::max_relative_error(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("detector loss gradients match finite differences") {
    std::mt19937_64 rng(81);
    for (int trial = 0; trial < 10; ++trial) {
        auto b = testutil::random_batch(4, 4, 2, 2, rng);
        std::vector<std::vector<double>> logits;
        std::vector<int> targets;
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::uniform_int_distribution<int> t(0, 2);
        for (size_t i = 0; i < b.size(); ++i) {
            logits.push_back({u(rng), u(rng), u(rng)});
            targets.push_back(t(rng));
        }
        auto res = anp::detector_loss_grads(b, logits, targets, 0.07);
        CHECK(res.loss == doctest::Approx(res.ce + res.con).epsilon(1e-12));

        auto numeric_e = testutil::finite_differences(
            flatten_embeddings(b), [&](const std::vector<double>& flat) {
                return anp::detector_loss(with_embeddings(b, flat), logits, targets, 0.07);
            });
        CHECK(testutil::max_relative_error(flatten_grads(res.embedding_grads), numeric_e) <
              1e-4);

        std::vector<double> flat_logits;
        for (const auto& row : logits)
            flat_logits.insert(flat_logits.end(), row.begin(), row.end());
        auto numeric_l = testutil::finite_differences(
            flat_logits, [&](const std::vector<double>& flat) {
                std::vector<std::vector<double>> lg = logits;
                for (size_t i = 0; i < lg.size(); ++i)
                    lg[i].assign(flat.begin() + i * 3, flat.begin() + (i + 1) * 3);
                return anp::detector_loss(b, lg, targets, 0.07);
            });
        CHECK(testutil::max_relative_error(flatten_grads(res.logit_grads), numeric_l) <
              1e-4);
    }
}

TEST_CASE("softmax sums to 1 and is shift invariant") {
    auto p = anp::softmax({1.0, 2.0, 3.0});
    double sum = 0;
    for (double x : p) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    auto q = anp::softmax({101.0, 102.0, 103.0});
    for (size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
}

TEST_CASE("loss config validation") {
    anp::LossConfig ok;
    CHECK_NOTHROW(ok.validate());
    anp::LossConfig bad_tau = ok;
    bad_tau.tau = 0.0;
    CHECK_THROWS_AS(bad_tau.validate(), DataError);
    anp::LossConfig bad_lambda = ok;
    bad_lambda.lambda_mix = -0.1;
    CHECK_THROWS_AS(bad_lambda.validate(), DataError);
    anp::LossConfig bad_k = ok;
    bad_k.k_concepts = 1;
    CHECK_THROWS_AS(bad_k.validate(), DataError);
    anp::LossConfig bad_chains = ok;
    bad_chains.k_chains = 0;
    CHECK_THROWS_AS(bad_chains.validate(), DataError);
}
