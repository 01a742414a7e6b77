#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "prwkv/checkpoint.hpp"
#include "prwkv/rng.hpp"
#include "prwkv/tensor.hpp"

using namespace prwkv;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("matmul identity and forced arithmetic") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor col = Tensor::from_data({2, 1}, {5, 7});
    Tensor out = matmul(eye, col);
    CHECK(out.data() == std::vector<double>{5, 7});

    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor ones = Tensor::from_data({2, 1}, {1, 1});
    Tensor b = matmul(a, ones);
    CHECK(b.data() == std::vector<double>{3, 7});
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL("expected dimension error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient vs central finite differences") {
    Rng rng(42);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    const double err_a = fd_check([&](const Tensor& t) { return sum_all(matmul(t, b)); }, a);
    const double err_b = fd_check([&](const Tensor& t) { return sum_all(matmul(a, t)); }, b);
    CHECK(err_a <= 1e-6);
    CHECK(err_b <= 1e-6);
}

TEST_CASE("layernorm constant row collapses to beta") {
    Tensor x = Tensor::from_data({1, 4}, {3, 3, 3, 3});
    Tensor g = Tensor::full({4}, 1.0);
    Tensor b = Tensor::zeros({4});
    Tensor out = layernorm(x, g, b);
    for (double v : out.data()) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("layernorm symmetric pair is already unit variance") {
    Tensor x = Tensor::from_data({1, 2}, {1, -1});
    Tensor g = Tensor::full({2}, 1.0);
    Tensor b = Tensor::zeros({2});
    Tensor out = layernorm(x, g, b, 1e-12);
    CHECK(out.data()[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out.data()[1] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("layernorm gradient vs finite differences") {
    Rng rng(7);
    Tensor x = random_tensor({2, 5}, rng);
    Tensor g = random_tensor({5}, rng, 0.5, 1.5);
    Tensor b = random_tensor({5}, rng);
    Tensor w = random_tensor({2, 5}, rng);
    const double err =
        fd_check([&](const Tensor& t) { return sum_all(mul(layernorm(t, g, b), w)); }, x);
    CHECK(err <= 1e-6);
}

TEST_CASE("layernorm rejects zero eps") {
    Tensor x = Tensor::zeros({1, 2});
    Tensor g = Tensor::full({2}, 1.0);
    CHECK_THROWS_AS(layernorm(x, g, g, 0.0), std::invalid_argument);
}

TEST_CASE("activation point values") {
    Tensor x = Tensor::from_data({4}, {0.0, 0.0, -2.0, 3.0});
    CHECK(silu(x).data()[0] == 0.0);
    CHECK(sigmoid(x).data()[1] == 0.5);
    CHECK(squared_relu(x).data()[2] == 0.0);
    CHECK(squared_relu(x).data()[3] == 9.0);
}

TEST_CASE("activation gradients on 100 random scalars") {
    Rng rng(3);
    auto check = [&](Tensor (*fn)(const Tensor&)) {
        Tensor x = random_tensor({100}, rng, -2.0, 2.0);
        for (double& v : x.mutable_data())
            if (std::abs(v) < 1e-2) v += 0.05;
        Tensor w = random_tensor({100}, rng);
        return fd_check([&](const Tensor& t) { return sum_all(mul(fn(t), w)); }, x);
    };
    CHECK(check(silu) <= 1e-6);
    CHECK(check(sigmoid) <= 1e-6);
    CHECK(check(tanh_op) <= 1e-6);
    CHECK(check(exp_op) <= 1e-6);
    CHECK(check(squared_relu) <= 1e-6);
}

TEST_CASE("concat then slice round-trips bit-exactly") {
    Rng rng(9);
    Tensor a = random_tensor({3, 2}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Tensor cat = concat_last_axis({a, b});
    CHECK(cat.shape() == Shape{3, 5});
    CHECK(slice_last_axis(cat, 0, 2).data() == a.data());
    CHECK(slice_last_axis(cat, 2, 5).data() == b.data());
}

TEST_CASE("concat of four quarters restores full width") {
    Rng rng(10);
    Tensor x = random_tensor({2, 8}, rng);
    std::vector<Tensor> quarters;
    for (int q = 0; q < 4; ++q) quarters.push_back(slice_last_axis(x, q * 2, (q + 1) * 2));
    Tensor cat = concat_last_axis(quarters);
    CHECK(cat.shape() == Shape{2, 8});
    CHECK(cat.data() == x.data());
}

TEST_CASE("slice bounds are checked") {
    Tensor x = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(slice_last_axis(x, 2, 6), std::out_of_range);
    CHECK_THROWS_AS(slice_last_axis(x, 3, 3), std::out_of_range);
}

TEST_CASE("slice gradient routes only to the sliced region") {
    Rng rng(11);
    Tensor x = random_tensor({2, 6}, rng);
    x.set_requires_grad(true);
    tape().clear();
    Tensor loss = sum_all(slice_last_axis(x, 2, 4));
    backward(loss);
    const auto& g = x.grad();
    for (std::int64_t r = 0; r < 2; ++r)
        for (std::int64_t c = 0; c < 6; ++c)
            CHECK(g[static_cast<std::size_t>(r * 6 + c)] == ((c >= 2 && c < 4) ? 1.0 : 0.0));
    tape().clear();
}

TEST_CASE("backward of sum gives all-ones gradient") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, /*requires_grad=*/true);
    tape().clear();
    backward(sum_all(x));
    for (double g : x.grad()) CHECK(g == 1.0);
    tape().clear();
}

TEST_CASE("backward of sum of squares gives 2x") {
    Tensor x = Tensor::from_data({4}, {1, -2, 0.5, 3}, /*requires_grad=*/true);
    tape().clear();
    backward(sum_all(mul(x, x)));
    for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]));
    tape().clear();
}

TEST_CASE("shared subexpressions sum gradients over all paths") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
    tape().clear();
    Tensor y = add(x, Tensor::zeros({3}));
    backward(sum_all(add(y, y)));  // y used twice
    for (double g : x.grad()) CHECK(g == 2.0);
    tape().clear();
}

TEST_CASE("repeated backward accumulates until zeroed") {
    Tensor x = Tensor::from_data({2}, {1, 1}, true);
    tape().clear();
    Tensor loss = sum_all(x);
    backward(loss);
    backward(loss);
    for (double g : x.grad()) CHECK(g == 2.0);
    x.zero_grad();
    for (double g : x.grad()) CHECK(g == 0.0);
    tape().clear();
}

TEST_CASE("non-scalar loss is a contract error") {
    Tensor x = Tensor::zeros({2, 2}, true);
    tape().clear();
    Tensor y = add(x, x);
    CHECK_THROWS_AS(backward(y), std::logic_error);
    tape().clear();
}

TEST_CASE("loss detached from tracked tensors is a contract error") {
    Tensor x = Tensor::zeros({3});
    tape().clear();
    CHECK_THROWS_AS(backward(sum_all(x)), std::logic_error);
    tape().clear();
}

TEST_CASE("fd_check on a linear map sits at machine-epsilon scale") {
    Rng rng(20);
    Tensor w = random_tensor({4}, rng);
    Tensor x = random_tensor({4}, rng);
    const double err = fd_check([&](const Tensor& t) { return sum_all(mul(t, w)); }, x);
    CHECK(err <= 1e-9);
}

TEST_CASE("fd_check on silu of matmul") {
    Rng rng(21);
    Tensor b = random_tensor({3, 2}, rng);
    Tensor x = random_tensor({2, 3}, rng);
    const double err = fd_check([&](const Tensor& t) { return sum_all(silu(matmul(t, b))); }, x);
    CHECK(err <= 1e-6);
}

TEST_CASE("fd_check on a branchy function evaluated away from the branch") {
    Rng rng(22);
    Tensor x = random_tensor({16}, rng, 0.2, 1.5);  // squared_relu kink sits at 0
    const double err = fd_check([&](const Tensor& t) { return sum_all(squared_relu(t)); }, x);
    CHECK(err <= 1e-6);
}

TEST_CASE("forward outputs stay finite on finite inputs") {
    Rng rng(23);
    Tensor x = random_tensor({8, 8}, rng, -3.0, 3.0);
    Tensor g = Tensor::full({8}, 1.0);
    Tensor b = Tensor::zeros({8});
    Tensor y = silu(layernorm(matmul(x, x), g, b));
    for (double v : y.data()) CHECK(std::isfinite(v));
    CHECK(first_nonfinite_on_tape() == nullptr);
}

TEST_CASE("f32 mode rounds op outputs to float precision") {
    set_compute_precision(Precision::f32);
    Tensor a = Tensor::from_data({1}, {0.1});
    Tensor b = Tensor::from_data({1}, {0.2});
    Tensor c = add(a, b);
    CHECK(c.data()[0] == static_cast<double>(static_cast<float>(0.1 + 0.2)));
    set_compute_precision(Precision::f64);
    Tensor d = add(a, b);
    CHECK(d.data()[0] == 0.1 + 0.2);
}

TEST_CASE("checkpoint round-trip restores exact bits") {
    Rng rng(31);
    ParamStore store;
    store.add("alpha", random_tensor({3, 4}, rng));
    store.add("beta", random_tensor({7}, rng));
    const std::string path = (std::filesystem::temp_directory_path() / "prwkv_ckpt_test.prwk").string();
    save_checkpoint(store, path);

    ParamStore loaded;
    Tensor a2 = loaded.add("alpha", Tensor::zeros({3, 4}));
    Tensor b2 = loaded.add("beta", Tensor::zeros({7}));
    load_checkpoint(loaded, path);
    CHECK(a2.data() == store.get("alpha").data());
    CHECK(b2.data() == store.get("beta").data());

    // second save produces identical bytes
    const std::string path2 = path + ".again";
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("checkpoint loader rejects shape mismatches by name") {
    Rng rng(32);
    ParamStore store;
    store.add("weights", random_tensor({2, 2}, rng));
    const std::string path = (std::filesystem::temp_directory_path() / "prwkv_ckpt_bad.prwk").string();
    save_checkpoint(store, path);

    ParamStore other;
    other.add("weights", Tensor::zeros({2, 3}));
    try {
        load_checkpoint(other, path);
        FAIL("expected shape mismatch");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("weights") != std::string::npos);
    }
    std::filesystem::remove(path);
}
