#include <doctest.h>

#include <cmath>
#include <functional>

#include "shlight/errors.hpp"
#include "shlight/graph.hpp"
#include "shlight/random.hpp"

using namespace shlight;

namespace {

using DTensor = TensorT<double>;
using DTape = TapeT<double>;

DTensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    DTensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// keeps relu/maxpool inputs away from their kinks so central differences stay
// valid
void avoid_kinks(DTensor& t, double margin = 5e-3) {
    for (double& v : t.data)
        if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
}

double rel_err(const DTensor& got, const DTensor& want) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += (got.data[i] - want.data[i]) * (got.data[i] - want.data[i]);
        den += want.data[i] * want.data[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

// Builds f(x) = scalar via `graph`, checks tape gradients w.r.t. x against
// central differences. The graph builder runs on a fresh tape per call so
// the probe evaluations replay identical dropout masks.
void check_gradient(const std::function<DTape::Id(DTape&, DTape::Id)>& graph, const DTensor& x0,
                    double tolerance = 1e-4) {
    auto eval = [&](const DTensor& x) {
        DTape tape(1234);
        DTape::Id xid = tape.input(x);
        DTape::Id out = graph(tape, xid);
        return tape.value(out).data[0];
    };

    DTape tape(1234);
    DTensor x = x0;
    x.requires_grad = true;
    DTape::Id xid = tape.input(x);
    DTape::Id out = graph(tape, xid);
    tape.backward(out);
    DTensor analytic = tape.grad(xid);

    DTensor fd = finite_diff_grad<double>(eval, x0, 1e-4);
    CHECK(rel_err(analytic, fd) < tolerance);
}

}  // namespace

TEST_CASE("forward basics") {
    DTape tape;
    SUBCASE("relu") {
        auto id = tape.relu(tape.input(DTensor::from({2}, {-1.0, 2.0})));
        CHECK(tape.value(id).data == std::vector<double>{0.0, 2.0});
    }
    SUBCASE("softsign") {
        auto id = tape.softsign(tape.input(DTensor::from({3}, {1.0, 0.0, -3.0})));
        CHECK(tape.value(id).data[0] == doctest::Approx(0.5));
        CHECK(tape.value(id).data[1] == 0.0);
        CHECK(tape.value(id).data[2] == doctest::Approx(-0.75));
    }
    SUBCASE("identity conv kernel reproduces the map") {
        Rng rng(5);
        DTensor x = random_tensor({1, 1, 6, 7}, rng);
        DTensor w({1, 1, 3, 3});
        w.data[4] = 1.0;  // center tap
        DTensor b({1});
        auto out = tape.conv2d(tape.input(x), tape.input(w), tape.input(b), 1, 1);
        REQUIRE(tape.value(out).shape == std::vector<int>{1, 1, 6, 7});
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(tape.value(out).data[i] == doctest::Approx(x.data[i]));
    }
    SUBCASE("maxpool 2x2") {
        DTensor x = DTensor::from({1, 1, 2, 2}, {1.0, 4.0, 3.0, 2.0});
        auto out = tape.maxpool2d(tape.input(x), 2, 2);
        CHECK(tape.value(out).data == std::vector<double>{4.0});
    }
    SUBCASE("bilinear resize to the same size is the identity") {
        Rng rng(6);
        DTensor x = random_tensor({1, 2, 5, 4}, rng);
        auto out = tape.bilinear_resize(tape.input(x), 5, 4);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(tape.value(out).data[i] == doctest::Approx(x.data[i]));
    }
    SUBCASE("global average pool") {
        DTensor x = DTensor::from({1, 2, 1, 2}, {1.0, 3.0, 10.0, 20.0});
        auto out = tape.global_avg_pool(tape.input(x));
        CHECK(tape.value(out).data == std::vector<double>{2.0, 15.0});
    }
}

TEST_CASE("shape errors name the offending node") {
    DTape tape;
    DTensor x({1, 3, 8, 8});
    DTensor w({4, 2, 3, 3});  // wrong input channel count
    DTensor b({4});
    auto xid = tape.input(x);
    auto wid = tape.input(w);
    auto bid = tape.input(b);
    CHECK_THROWS_WITH_AS(tape.conv2d(xid, wid, bid, 1, 1),
                         doctest::Contains("conv2d (node"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(tape.mse(xid, wid), doctest::Contains("shape mismatch"),
                         std::invalid_argument);
}

TEST_CASE("backward analytic cases") {
    SUBCASE("mse gradient is 2(x - x0)/N") {
        DTape tape;
        DTensor x = DTensor::from({4}, {1.0, 2.0, 3.0, 4.0});
        x.requires_grad = true;
        DTensor x0 = DTensor::from({4}, {0.0, 0.0, 0.0, 0.0});
        auto xid = tape.input(x);
        auto loss = tape.mse(xid, tape.input(x0));
        tape.backward(loss);
        for (int i = 0; i < 4; ++i)
            CHECK(tape.grad(xid).data[i] == doctest::Approx(2.0 * x.data[i] / 4.0));
    }
    SUBCASE("softsign derivative values") {
        // d softsign / dy = 1 / (1 + |y|)^2: 1 at 0, 0.25 at 1
        for (double at : {0.0, 1.0}) {
            DTape tape;
            DTensor x = DTensor::from({1}, {at});
            x.requires_grad = true;
            auto xid = tape.input(x);
            // mse(softsign(x), 0) = softsign(x)^2, d/dx = 2 s s'
            auto loss = tape.mse(tape.softsign(xid), tape.input(DTensor({1})));
            tape.backward(loss);
            double s = at / (1.0 + std::abs(at));
            double ds = 1.0 / ((1.0 + std::abs(at)) * (1.0 + std::abs(at)));
            CHECK(tape.grad(xid).data[0] == doctest::Approx(2.0 * s * ds));
        }
    }
    SUBCASE("backward before forward is an invalid state") {
        DTape tape;
        CHECK_THROWS_AS(tape.backward(0), invalid_state);
    }
    SUBCASE("gradients unavailable before backward") {
        DTape tape;
        auto id = tape.input(DTensor({2}));
        CHECK_THROWS_AS(tape.grad(id), invalid_state);
    }
}

TEST_CASE("finite difference oracle sanity") {
    SUBCASE("f(x) = sum x^2 at 3") {
        auto f = [](const DTensor& t) { return t.data[0] * t.data[0]; };
        DTensor x = DTensor::from({1}, {3.0});
        DTensor g = finite_diff_grad<double>(f, x, 1e-4);
        CHECK(g.data[0] == doctest::Approx(6.0).epsilon(1e-6));
    }
    SUBCASE("constant function has zero gradient") {
        auto f = [](const DTensor&) { return 42.0; };
        DTensor x = DTensor::from({3}, {1.0, 2.0, 3.0});
        DTensor g = finite_diff_grad<double>(f, x, 1e-4);
        for (double v : g.data) CHECK(v == 0.0);
    }
}

TEST_CASE("gradient check for every op") {
    for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
        CAPTURE(seed);
        Rng rng(seed);

        SUBCASE("conv2d") {
            DTensor x = random_tensor({2, 3, 6, 5}, rng);
            DTensor w = random_tensor({4, 3, 3, 3}, rng);
            DTensor b = random_tensor({4}, rng);
            DTensor target = random_tensor({2, 4, 3, 3}, rng);
            // gradient w.r.t. the input
            check_gradient(
                [&](DTape& t, DTape::Id xid) {
                    return t.mse(t.conv2d(xid, t.input(w), t.input(b), 2, 1), t.input(target));
                },
                x);
            // gradient w.r.t. the weights
            check_gradient(
                [&](DTape& t, DTape::Id wid) {
                    return t.mse(t.conv2d(t.input(x), wid, t.input(b), 2, 1), t.input(target));
                },
                w);
            // gradient w.r.t. the bias
            check_gradient(
                [&](DTape& t, DTape::Id bid) {
                    return t.mse(t.conv2d(t.input(x), t.input(w), bid, 2, 1), t.input(target));
                },
                b);
        }

        SUBCASE("maxpool2d") {
            DTensor x = random_tensor({1, 2, 6, 6}, rng);
            DTensor target = random_tensor({1, 2, 3, 3}, rng);
            check_gradient(
                [&](DTape& t, DTape::Id xid) {
                    return t.mse(t.maxpool2d(xid, 2, 2), t.input(target));
                },
                x);
        }

        SUBCASE("relu") {
            DTensor x = random_tensor({3, 7}, rng);
            avoid_kinks(x);
            DTensor target = random_tensor({3, 7}, rng);
            check_gradient(
                [&](DTape& t, DTape::Id xid) { return t.mse(t.relu(xid), t.input(target)); }, x);
        }

        SUBCASE("softsign") {
            DTensor x = random_tensor({4, 3}, rng);
            DTensor target = random_tensor({4, 3}, rng);
            check_gradient(
                [&](DTape& t, DTape::Id xid) { return t.mse(t.softsign(xid), t.input(target)); },
                x);
        }

        SUBCASE("fully connected") {
            DTensor x = random_tensor({3, 5}, rng);
            DTensor w = random_tensor({5, 4}, rng);
            DTensor b = random_tensor({4}, rng);
            DTensor target = random_tensor({3, 4}, rng);
            check_gradient(
                [&](DTape& t, DTape::Id xid) {
                    return t.mse(t.fully_connected(xid, t.input(w), t.input(b)),
                                 t.input(target));
                },
                x);
            check_gradient(
                [&](DTape& t, DTape::Id wid) {
                    return t.mse(t.fully_connected(t.input(x), wid, t.input(b)),
                                 t.input(target));
                },
                w);
        }

        SUBCASE("dropout (train mode, fixed mask per tape seed)") {
            DTensor x = random_tensor({6, 6}, rng);
            DTensor target = random_tensor({6, 6}, rng);
            check_gradient(
                [&](DTape& t, DTape::Id xid) {
                    return t.mse(t.dropout(xid, 0.5, true), t.input(target));
                },
                x);
        }

        SUBCASE("concat, add, mul, scale") {
            DTensor a = random_tensor({1, 2, 3, 3}, rng);
            DTensor b = random_tensor({1, 3, 3, 3}, rng);
            DTensor target = random_tensor({1, 5, 3, 3}, rng);
            check_gradient(
                [&](DTape& t, DTape::Id aid) {
                    return t.mse(t.concat_channels(aid, t.input(b)), t.input(target));
                },
                a);

            DTensor c = random_tensor({7}, rng);
            DTensor d = random_tensor({7}, rng);
            DTensor tgt = random_tensor({7}, rng);
            check_gradient(
                [&](DTape& t, DTape::Id cid) {
                    return t.mse(t.scale(t.mul(t.add(cid, t.input(d)), t.input(d)), 1.7),
                                 t.input(tgt));
                },
                c);
        }

        SUBCASE("bilinear resize") {
            DTensor x = random_tensor({1, 2, 4, 4}, rng);
            DTensor target = random_tensor({1, 2, 8, 6}, rng);
            check_gradient(
                [&](DTape& t, DTape::Id xid) {
                    return t.mse(t.bilinear_resize(xid, 8, 6), t.input(target));
                },
                x);
        }

        SUBCASE("global average pool and reshape") {
            DTensor x = random_tensor({2, 3, 4, 4}, rng);
            DTensor target = random_tensor({2, 3}, rng);
            check_gradient(
                [&](DTape& t, DTape::Id xid) {
                    return t.mse(t.reshape(t.global_avg_pool(xid), {2, 3}), t.input(target));
                },
                x);
        }

        SUBCASE("composed conv-relu-fc-mse graph") {
            DTensor x = random_tensor({2, 2, 6, 6}, rng);
            DTensor w1 = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
            DTensor b1 = random_tensor({3}, rng, 0.1, 0.4);  // bias keeps relu off its kink
            DTensor w2 = random_tensor({27, 4}, rng, -0.5, 0.5);
            DTensor b2 = random_tensor({4}, rng);
            DTensor target = random_tensor({2, 4}, rng);
            auto graph = [&](DTape& t, DTape::Id xid) {
                auto h = t.relu(t.conv2d(xid, t.input(w1), t.input(b1), 2, 1));
                auto flat = t.reshape(h, {2, 27});
                auto out = t.fully_connected(flat, t.input(w2), t.input(b2));
                return t.mse(out, t.input(target));
            };
            check_gradient(graph, x);
        }
    }
}

TEST_CASE("dropout statistics and eval mode") {
    SUBCASE("eval mode is the identity") {
        DTape tape(9);
        Rng rng(10);
        DTensor x = random_tensor({10, 10}, rng);
        auto out = tape.dropout(tape.input(x), 0.5, false);
        CHECK(tape.value(out).data == x.data);
    }
    SUBCASE("train mode preserves the mean within 2%") {
        DTape tape(99);
        DTensor x = DTensor::full({10000}, 1.0);
        auto out = tape.dropout(tape.input(x), 0.5, true);
        double mean = 0.0;
        for (double v : tape.value(out).data) mean += v;
        mean /= static_cast<double>(x.size());
        CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        std::vector<DTensor> params{DTensor::from({3}, {1.0, -2.0, 3.0})};
        std::vector<DTensor> grads{DTensor({3})};
        AdamStateT<double> state;
        state.init(params);
        auto before = params[0].data;
        adam_step(params, grads, state);
        CHECK(params[0].data == before);
    }

    SUBCASE("first step magnitude is lr * g / (sqrt(g^2) + eps)") {
        std::vector<DTensor> params{DTensor::from({3}, {0.0, 0.0, 0.0})};
        std::vector<DTensor> grads{DTensor::from({3}, {0.5, -2.0, 1e-3})};
        AdamStateT<double> state;
        state.config.lr = 1e-4;
        state.init(params);
        adam_step(params, grads, state);
        for (int i = 0; i < 3; ++i) {
            double g = grads[0].data[i];
            double want = -1e-4 * g / (std::sqrt(g * g) + state.config.eps);
            CHECK(params[0].data[i] == doctest::Approx(want).epsilon(1e-6));
        }
    }

    SUBCASE("identical calls from identical state produce identical results") {
        Rng rng(17);
        std::vector<DTensor> pa{random_tensor({8}, rng)};
        std::vector<DTensor> ga{random_tensor({8}, rng)};
        std::vector<DTensor> pb = pa;
        AdamStateT<double> sa, sb;
        sa.init(pa);
        sb.init(pb);
        adam_step(pa, ga, sa);
        adam_step(pb, ga, sb);
        CHECK(pa[0].data == pb[0].data);
        CHECK(sa.m[0].data == sb.m[0].data);
    }

    SUBCASE("shape mismatch is rejected") {
        std::vector<DTensor> params{DTensor({3})};
        std::vector<DTensor> grads{DTensor({4})};
        AdamStateT<double> state;
        state.init(params);
        CHECK_THROWS_AS(adam_step(params, grads, state), std::invalid_argument);
    }
}

TEST_CASE("tape determinism under a fixed seed") {
    auto run = [] {
        DTape tape(4242);
        Rng rng(5);
        DTensor x = random_tensor({4, 4}, rng);
        x.requires_grad = true;
        auto xid = tape.input(x);
        auto out = tape.mse(tape.dropout(xid, 0.3, true), tape.input(DTensor({4, 4})));
        tape.backward(out);
        return std::make_pair(tape.value(out).data[0], tape.grad(xid).data);
    };
    auto a = run();
    auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}
