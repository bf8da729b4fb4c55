#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace raune;

TEST_CASE("tensor shape and indexing") {
    Tensor<double> t({2, 3, 4, 5});
    REQUIRE(t.numel() == 120);
    REQUIRE(t.rank() == 4);
    t.at(1, 2, 3, 4) = 7.0;
    REQUIRE(t[t.numel() - 1] == 7.0);
    REQUIRE(t.idx4(0, 0, 0, 1) == 1);
    REQUIRE(t.idx4(1, 0, 0, 0) == 60);

    Tensor<double> s = Tensor<double>::scalar(3.5);
    REQUIRE(s.shape == Shape{1});
    REQUIRE(s[0] == 3.5);
}

TEST_CASE("tensor reductions and casts") {
    Tensor<float> t({4}, 2.0f);
    t[0] = -1.0f;
    REQUIRE(t.min() == -1.0f);
    REQUIRE(t.max() == 2.0f);
    REQUIRE(t.sum() == Catch::Approx(5.0));
    Tensor<double> d = t.cast<double>();
    REQUIRE(d[0] == -1.0);
}

TEST_CASE("reflect_index maps overshoot back inside") {
    REQUIRE(reflect_index(-1, 5) == 1);
    REQUIRE(reflect_index(-3, 5) == 3);
    REQUIRE(reflect_index(0, 5) == 0);
    REQUIRE(reflect_index(4, 5) == 4);
    REQUIRE(reflect_index(5, 5) == 3);
    REQUIRE(reflect_index(7, 5) == 1);
}

TEST_CASE("rng streams are deterministic per seed") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        double va = a.normal();
        REQUIRE(va == b.normal());
        (void)c.normal();
    }
    Rng d(42), e(43);
    bool differ = false;
    for (int i = 0; i < 16 && !differ; ++i) differ = d.next_u64() != e.next_u64();
    REQUIRE(differ);
}

TEST_CASE("rng normal has roughly standard moments") {
    Rng rng(7);
    const int n = 20000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal();
        sum += v;
        sum2 += v * v;
    }
    REQUIRE(std::abs(sum / n) < 0.03);
    REQUIRE(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("rng shuffle is deterministic and a permutation") {
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7}, w = v;
    Rng a(5), b(5);
    a.shuffle(v);
    b.shuffle(w);
    REQUIRE(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    REQUIRE(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("crc32 matches the standard check value") {
    const char* s = "123456789";
    REQUIRE(crc32(reinterpret_cast<const uint8_t*>(s), 9) == 0xCBF43926u);
}

TEST_CASE("parameter checksum is order- and value-sensitive") {
    Tensor<double> t({4}, 1.0);
    auto a = make_var(t, true);
    auto b = make_var(t, true);
    std::vector<std::pair<std::string, Var<double>>> p1{{"a", a}, {"b", b}};
    std::vector<std::pair<std::string, Var<double>>> p2{{"b", b}, {"a", a}};
    uint32_t c1 = parameters_crc32(p1);
    REQUIRE(c1 != parameters_crc32(p2));
    b->value[2] = 5.0;
    REQUIRE(c1 != parameters_crc32(p1));
}
