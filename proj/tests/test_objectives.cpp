#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "langadv/objectives.hpp"
#include "langadv/rng.hpp"

using namespace langadv;

namespace {

// Wrap raw probabilities in a graph constant shaped (batch, 1).
Var prob_column(Graph& g, const std::vector<double>& probs) {
    Tensor t({static_cast<int>(probs.size()), 1}, probs);
    return g.constant(std::move(t));
}

Var class_rows(Graph& g, const std::vector<std::vector<double>>& rows) {
    const int b = static_cast<int>(rows.size());
    const int k = static_cast<int>(rows[0].size());
    Tensor t({b, k});
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < k; ++j) t.at2(i, j) = rows[static_cast<std::size_t>(i)][j];
    return g.constant(std::move(t));
}

}  // namespace

// ---------------------------------------------------------------------------
// task loss
// ---------------------------------------------------------------------------

TEST_CASE("document cross-entropy matches hand-computed values") {
    Graph g;
    // single row, true class probability 0.7
    Var probs = class_rows(g, {{0.1, 0.7, 0.2}});
    Var loss = task_loss_doc(g, probs, {1});
    CHECK(g.scalar_value(loss) == doctest::Approx(0.35667494393873238).epsilon(1e-14));
}

TEST_CASE("document cross-entropy sums rows and mean divides by batch") {
    Graph g;
    Var probs = class_rows(g, {{0.8, 0.2}, {0.3, 0.7}});
    // -ln 0.8 - ln 0.7
    Var sum_loss = task_loss_doc(g, probs, {0, 1});
    CHECK(g.scalar_value(sum_loss) == doctest::Approx(0.57981849525294213).epsilon(1e-13));
    Var mean_loss = task_loss_doc(g, probs, {0, 1}, Reduction::MeanOverBatch);
    CHECK(g.scalar_value(mean_loss) ==
          doctest::Approx(0.57981849525294213 / 2.0).epsilon(1e-13));
}

TEST_CASE("wrong confident predictions cost more") {
    Graph g;
    // -ln 0.2 - ln 0.3
    Var probs = class_rows(g, {{0.2, 0.8}, {0.7, 0.3}});
    Var loss = task_loss_doc(g, probs, {0, 1});
    CHECK(g.scalar_value(loss) == doctest::Approx(2.8134107167600364).epsilon(1e-13));
}

TEST_CASE("task loss rejects bad labels") {
    Graph g;
    Var probs = class_rows(g, {{0.5, 0.5}});
    CHECK_THROWS_AS((void)task_loss_doc(g, probs, {2}), std::invalid_argument);
    CHECK_THROWS_AS((void)task_loss_doc(g, probs, {-1}), std::invalid_argument);
    CHECK_THROWS_AS((void)task_loss_doc(g, probs, {0, 0}), std::invalid_argument);  // count
}

TEST_CASE("classify_doc produces a softmax distribution per row") {
    TaskHead head(3, 4, 99);
    Graph g;
    Var pooled = g.constant(Tensor({2, 4}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.2, 0.0, 0.1}));
    const Tensor& probs = g.value(classify_doc(g, head, pooled));
    REQUIRE(probs.shape == Shape{2, 3});
    for (int r = 0; r < 2; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            CHECK(probs.at2(r, c) > 0.0);
            sum += probs.at2(r, c);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("sequence loss on a length-one row equals the document loss") {
    TaskHead head(4, 6, 5);
    Rng rng(31);
    Tensor states = Tensor::randn({1, 1, 6}, rng, 0.7);
    IntMatrix mask(1, 1, 1);

    Graph g;
    Var st = g.constant(states);
    Var seq_loss = task_loss_seq(g, st, head, {{2}}, mask);

    Graph g2;
    // the single token state is also the pooled state
    Tensor pooled({1, 6});
    for (int h = 0; h < 6; ++h) pooled.at2(0, h) = states.at3(0, 0, h);
    Var probs = classify_doc(g2, head, g2.constant(pooled));
    Var doc_loss = task_loss_doc(g2, probs, {2});

    CHECK(g.scalar_value(seq_loss) == doctest::Approx(g2.scalar_value(doc_loss)).epsilon(1e-13));
}

TEST_CASE("sequence loss skips masked positions") {
    TaskHead head(3, 4, 9);
    Rng rng(41);
    Tensor states = Tensor::randn({1, 3, 4}, rng, 0.5);
    IntMatrix full_mask(1, 3, 1);
    IntMatrix short_mask(1, 3, 1);
    short_mask.at(0, 2) = 0;

    Graph g1;
    Var l_all = task_loss_seq(g1, g1.constant(states), head, {{0, 1, 2}}, full_mask);
    Graph g2;
    Var l_short = task_loss_seq(g2, g2.constant(states), head, {{0, 1}}, short_mask);
    CHECK(g2.scalar_value(l_short) < g1.scalar_value(l_all));
    // label count must match unmasked positions
    Graph g3;
    CHECK_THROWS_AS((void)task_loss_seq(g3, g3.constant(states), head, {{0, 1, 2}}, short_mask),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// discriminator / generator
// ---------------------------------------------------------------------------

TEST_CASE("binary cross-entropy matches hand-computed values") {
    Graph g;
    Var p = prob_column(g, {0.7});
    // true label A: -ln 0.7
    CHECK(g.scalar_value(discriminator_loss(g, p, {1})) ==
          doctest::Approx(0.35667494393873238).epsilon(1e-14));
    // true label B: -ln 0.3
    Graph g2;
    Var p2 = prob_column(g2, {0.7});
    CHECK(g2.scalar_value(discriminator_loss(g2, p2, {0})) ==
          doctest::Approx(1.2039728043259360).epsilon(1e-13));
}

TEST_CASE("generator loss equals discriminator loss with flipped labels") {
    Rng rng(77);
    for (int rep = 0; rep < 1000; ++rep) {
        const int b = rng.uniform_int(1, 4);
        std::vector<double> probs(static_cast<std::size_t>(b));
        std::vector<int> labels(static_cast<std::size_t>(b));
        std::vector<int> flipped(static_cast<std::size_t>(b));
        for (int i = 0; i < b; ++i) {
            probs[static_cast<std::size_t>(i)] = rng.uniform_real();
            labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform(2));
            flipped[static_cast<std::size_t>(i)] = 1 - labels[static_cast<std::size_t>(i)];
        }
        Graph g;
        Var p = prob_column(g, probs);
        const double gen = g.scalar_value(generator_loss(g, p, labels));
        Graph g2;
        Var p2 = prob_column(g2, probs);
        const double disc_flipped = g2.scalar_value(discriminator_loss(g2, p2, flipped));
        CHECK(gen == disc_flipped);  // identical computation, bitwise equal
    }
}

TEST_CASE("at p = one half both losses equal 2 ln 2 for two examples") {
    Graph g;
    Var p = prob_column(g, {0.5, 0.5});
    const double expected = 2.0 * 0.69314718055994531;
    CHECK(g.scalar_value(discriminator_loss(g, p, {1, 0})) ==
          doctest::Approx(expected).epsilon(1e-12));
    Graph g2;
    Var p2 = prob_column(g2, {0.5, 0.5});
    CHECK(g2.scalar_value(generator_loss(g2, p2, {1, 0})) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("losses stay finite at saturated probabilities") {
    Graph g;
    Var p = prob_column(g, {0.0, 1.0});
    const double loss = g.scalar_value(discriminator_loss(g, p, {1, 0}));
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
    // clamped at kProbEps: each term is -ln(eps) up to roundoff in 1 - p
    CHECK(loss == doctest::Approx(2.0 * -std::log(kProbEps)).epsilon(1e-6));
}

TEST_CASE("losses are nonnegative and finite on random inputs") {
    Rng rng(123);
    for (int rep = 0; rep < 200; ++rep) {
        const int b = rng.uniform_int(1, 5);
        std::vector<double> probs(static_cast<std::size_t>(b));
        std::vector<int> labels(static_cast<std::size_t>(b));
        for (int i = 0; i < b; ++i) {
            probs[static_cast<std::size_t>(i)] = rng.uniform_real();
            labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform(2));
        }
        Graph g;
        Var p = prob_column(g, probs);
        const double d = g.scalar_value(discriminator_loss(g, p, labels));
        Graph g2;
        const double gen = g2.scalar_value(generator_loss(g2, prob_column(g2, probs), labels));
        CHECK(std::isfinite(d));
        CHECK(d >= 0.0);
        CHECK(std::isfinite(gen));
        CHECK(gen >= 0.0);
    }
}

TEST_CASE("discriminate maps pooled states to probabilities in the open interval") {
    Discriminator disc(5, 21);
    Rng rng(55);
    Graph g;
    Var pooled = g.constant(Tensor::randn({4, 5}, rng, 3.0));
    const Tensor& p = g.value(discriminate(g, disc, pooled));
    REQUIRE(p.shape == Shape{4, 1});
    for (double v : p.values) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("discriminator loss gradient descends toward the true label") {
    Discriminator disc(3, 2);
    Rng rng(61);
    Tensor pooled = Tensor::randn({2, 3}, rng, 1.0);

    auto loss_value = [&] {
        Graph g;
        Var p = discriminate(g, disc, g.constant(pooled));
        return g.scalar_value(discriminator_loss(g, p, {1, 0}, Reduction::MeanOverBatch));
    };
    const double before = loss_value();
    // one tiny manual gradient step on the discriminator parameters
    {
        Graph g;
        Var p = discriminate(g, disc, g.constant(pooled));
        Var loss = discriminator_loss(g, p, {1, 0}, Reduction::MeanOverBatch);
        g.backward(loss);
    }
    for (Parameter* prm : disc.all()) {
        for (std::size_t i = 0; i < prm->value.numel(); ++i)
            prm->value.values[i] -= 0.05 * prm->grad.values[i];
        prm->zero_grad();
    }
    CHECK(loss_value() < before);
}

TEST_CASE("label and probability counts must agree") {
    Graph g;
    Var p = prob_column(g, {0.5, 0.5});
    CHECK_THROWS_AS((void)discriminator_loss(g, p, {1}), std::invalid_argument);
    CHECK_THROWS_AS((void)generator_loss(g, p, {1, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS((void)discriminator_loss(g, p, {1, 2}), std::invalid_argument);
}

TEST_CASE("head initialization is deterministic in the seed") {
    TaskHead a(3, 4, 10), b(3, 4, 10), c(3, 4, 11);
    CHECK(a.weight.value.values == b.weight.value.values);
    CHECK(a.weight.value.values != c.weight.value.values);
    Discriminator d1(4, 10), d2(4, 10);
    CHECK(d1.weight.value.values == d2.weight.value.values);
    // biases start at zero
    for (double v : a.bias.value.values) CHECK(v == 0.0);
    for (double v : d1.bias.value.values) CHECK(v == 0.0);
}
