#include "planu/novelty.hpp"

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

using namespace planu;

namespace {

RndSettings small_settings(double lr)
{
    RndSettings s;
    s.embedding_dim = 32;
    s.hidden_sizes = {16, 8};
    s.learning_rate = lr;
    return s;
}

double norm2(const Vector& v)
{
    double n = 0.0;
    for (float x : v)
        n += static_cast<double>(x) * x;
    return n;
}

}  // namespace

TEST_SUITE("novelty")
{
    TEST_CASE("hash embedding is deterministic, unit length and case-insensitive")
    {
        const auto a = hash_embed("on(red, blue)", 384);
        CHECK(a.size() == 384);
        CHECK(norm2(a) == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(a == hash_embed("on(red, blue)", 384));
        CHECK(a == hash_embed("ON(Red, BLUE)", 384));
        CHECK(a != hash_embed("on(blue, red)", 384));
        CHECK(norm2(hash_embed("", 16)) == 0.0);
        CHECK_THROWS_AS(hash_embed("x", 0), std::invalid_argument);
        HashEmbedding h(64);
        CHECK(h.dimension() == 64);
        CHECK(h.embed("abc") == hash_embed("abc", 64));
    }

    TEST_CASE("normalizer tracks mean and standard deviation and clamps")
    {
        RunningNormalizer n(2, -5.0, 5.0);
        for (float v : {1.0f, 2.0f, 3.0f, 4.0f})
            n.observe(std::vector<float>{v, 10.0f});
        CHECK(n.count() == 4);
        // mean 2.5, population sd sqrt(1.25)
        const auto out = n.normalize(std::vector<float>{4.0f, 10.0f});
        CHECK(out[0] == doctest::Approx(1.5 / std::sqrt(1.25)).epsilon(1e-6));
        CHECK(out[1] == 0.0f);

        RunningNormalizer tight(1);
        tight.observe(std::vector<float>{0.0f});
        tight.observe(std::vector<float>{1.0f});
        CHECK(tight.normalize(std::vector<float>{100.0f})[0] == 1.0f);
        CHECK(tight.normalize(std::vector<float>{-100.0f})[0] == -1.0f);
        CHECK_THROWS_AS(tight.observe(std::vector<float>{1.0f, 2.0f}), std::invalid_argument);

        RunningNormalizer empty(3);
        CHECK(empty.normalize(std::vector<float>{1, 2, 3}) == Vector(3, 0.0f));
    }

    TEST_CASE("state buffer evicts oldest first")
    {
        StateBuffer b(2);
        b.push(1, {1.0f});
        b.push(2, {2.0f});
        b.push(3, {3.0f});
        CHECK(b.size() == 2);
        CHECK(b[0].id == 2);
        CHECK(b[1].id == 3);
        CHECK_THROWS_AS(StateBuffer(0), std::invalid_argument);
    }

    TEST_CASE("mlp shapes and parameter count")
    {
        Mlp m({4, 3, 2}, 1);
        CHECK(m.parameter_count() == 4 * 3 + 3 + 3 * 2 + 2);
        CHECK(m.parameters().size() == m.parameter_count());
        Mlp::Matrix x = Mlp::Matrix::Random(4, 5);
        CHECK(m.forward(x).rows() == 2);
        CHECK(m.forward(x).cols() == 5);
        CHECK_THROWS_AS(m.forward(Mlp::Matrix::Zero(3, 1)), std::invalid_argument);
        CHECK(Mlp({4, 3, 2}, 1).parameters() == m.parameters());
        CHECK(Mlp({4, 3, 2}, 2).parameters() != m.parameters());
    }

    TEST_CASE("mlp gradient agrees with central differences")
    {
        // double-precision oracle of the weighted loss for a 2-layer ReLU net
        Mlp m({3, 4, 2}, 9);
        Mlp::Matrix x(3, 3);
        x << 0.5f, -0.2f, 0.9f, 0.1f, 0.7f, -0.4f, -0.3f, 0.2f, 0.6f;
        Mlp::Matrix y(2, 3);
        y << 0.3f, -0.1f, 0.0f, 0.2f, 0.4f, -0.5f;
        const std::vector<float> w{1.0f, 2.0f, 1.0f};
        const auto grad = m.loss_gradient(x, y, w);
        const auto p = m.parameters();
        REQUIRE(grad.size() == p.size());

        auto loss_at = [&](const std::vector<double>& q) {
            // unpack: W1 (4x3 col-major), b1, W2 (2x4), b2
            double total = 0.0, tw = 0.0;
            for (int c = 0; c < 3; ++c) {
                double h[4];
                for (int r = 0; r < 4; ++r) {
                    double z = q[12 + r];
                    for (int k = 0; k < 3; ++k)
                        z += q[k * 4 + r] * x(k, c);
                    h[r] = std::max(z, 0.0);
                }
                double sq = 0.0;
                for (int r = 0; r < 2; ++r) {
                    double z = q[16 + 8 + r];
                    for (int k = 0; k < 4; ++k)
                        z += q[16 + k * 2 + r] * h[k];
                    sq += (z - y(r, c)) * (z - y(r, c));
                }
                total += w[c] * sq;
                tw += w[c];
            }
            return total / tw;
        };
        std::vector<double> q(p.begin(), p.end());
        double base_loss = 0.0;
        (void)m.loss_gradient(x, y, w, &base_loss);
        CHECK(base_loss == doctest::Approx(loss_at(q)).epsilon(1e-5));
        for (std::size_t i = 0; i < q.size(); ++i) {
            const double eps = 1e-6;
            auto up = q, down = q;
            up[i] += eps;
            down[i] -= eps;
            const double fd = (loss_at(up) - loss_at(down)) / (2 * eps);
            CHECK(std::abs(fd - grad[i]) <= 1e-4 + 1e-3 * std::abs(fd));
        }
    }

    TEST_CASE("target network is frozen during training")
    {
        RndModel rnd(small_settings(1e-3), 4);
        StateBuffer buf;
        for (int i = 0; i < 10; ++i) {
            auto e = hash_embed("state " + std::to_string(i), 32);
            rnd.observe(e);
            buf.push(static_cast<std::uint64_t>(i), e);
        }
        const auto target_before = rnd.target().parameters();
        const auto pred_before = rnd.predictor().parameters();
        Rng rng(1);
        const auto losses = rnd.train_predictor(buf, 8, 3, rng);
        CHECK(losses.size() == 3);
        CHECK(rnd.target().parameters() == target_before);
        CHECK(rnd.predictor().parameters() != pred_before);
    }

    TEST_CASE("identical predictor and target give zero novelty")
    {
        RndModel rnd(small_settings(1e-3), 5);
        rnd.predictor_mut().copy_parameters_from(rnd.target());
        CHECK(rnd.novelty_reward(hash_embed("anything", 32)) == 0.0);
        CHECK_THROWS_AS(rnd.novelty_reward(hash_embed("x", 31)), std::invalid_argument);
    }

    TEST_CASE("novelty is non-negative and scales with the weight")
    {
        auto s = small_settings(1e-3);
        RndModel a(s, 6);
        s.intrinsic_weight = 0.02;
        RndModel b(s, 6);
        const auto e = hash_embed("clear(red)", 32);
        CHECK(a.novelty_reward(e) >= 0.0);
        CHECK(b.novelty_reward(e) == doctest::Approx(2 * a.novelty_reward(e)));
    }

    TEST_CASE("training on one state drives its novelty down")
    {
        RndModel rnd(small_settings(1e-2), 7);
        StateBuffer buf;
        const auto e = hash_embed("holding(red) clear(blue)", 32);
        rnd.observe(e);
        rnd.observe(hash_embed("handempty", 32));
        buf.push(1, e);
        Rng rng(2);
        const double before = rnd.novelty_reward(e);
        rnd.train_predictor(buf, 4, 500, rng);
        CHECK(rnd.novelty_reward(e) < 0.05 * before);
    }

    TEST_CASE("training errors")
    {
        RndModel rnd(small_settings(1e-3), 8);
        StateBuffer empty;
        Rng rng(0);
        CHECK_THROWS_AS(rnd.train_predictor(empty, 4, 1, rng), std::invalid_argument);
        StateBuffer one;
        one.push(0, Vector(32, 0.0f));
        CHECK_THROWS_AS(rnd.train_predictor(one, 0, 1, rng), std::invalid_argument);
        auto bad = small_settings(0.0);
        CHECK_THROWS_AS(RndModel(bad, 1), std::invalid_argument);
    }
}
