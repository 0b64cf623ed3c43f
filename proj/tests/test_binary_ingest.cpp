#include <doctest.h>

#include <numeric>

#include "malimg/binary_ingest.hpp"
#include "malimg/errors.hpp"
#include "test_util.hpp"

using namespace malimg;

TEST_CASE("bin_width table examples") {
    CHECK(bin_width(5 * 1024) == 32);
    CHECK(bin_width(50 * 1024) == 128);
    CHECK(bin_width(2048000) == 1024);
    CHECK_THROWS_AS(bin_width(0), EmptyFileError);
}

TEST_CASE("bin_width edges are half-open at KiB multiples") {
    CHECK(bin_width(1) == 32);
    CHECK(bin_width(10 * 1024) == 32);
    CHECK(bin_width(10 * 1024 + 1) == 64);
    CHECK(bin_width(1000 * 1024) == 768);
    CHECK(bin_width(1000 * 1024 + 1) == 1024);
}

TEST_CASE("bin_width is nondecreasing") {
    std::uint32_t prev = 0;
    for (std::uint64_t s = 1; s <= 1100 * 1024; s += 97) {
        const auto w = bin_width(s);
        CHECK(w >= prev);
        prev = w;
    }
}

TEST_CASE("truncate_pad") {
    Rng rng(3);
    const Bytes big = testutil::random_bytes(rng, 20000);
    const Bytes cut = truncate_pad(big, 16384);
    REQUIRE(cut.size() == 16384);
    CHECK(std::equal(cut.begin(), cut.end(), big.begin()));

    const Bytes ten = testutil::random_bytes(rng, 10);
    const Bytes padded = truncate_pad(ten, 16);
    REQUIRE(padded.size() == 16);
    CHECK(std::equal(ten.begin(), ten.end(), padded.begin()));
    CHECK(std::all_of(padded.begin() + 10, padded.end(), [](auto b) { return b == 0; }));

    const Bytes exact = testutil::random_bytes(rng, 16384);
    CHECK(truncate_pad(exact, 16384) == exact);

    CHECK(truncate_pad(Bytes{}, 4) == Bytes(4, 0));
}

TEST_CASE("truncate_pad is idempotent") {
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        const Bytes in = testutil::random_bytes(rng, rng.uniform_index(300));
        const std::size_t target = 1 + rng.uniform_index(300);
        const Bytes once = truncate_pad(in, target);
        CHECK(truncate_pad(once, target) == once);
    }
}

TEST_CASE("layout_grid") {
    Bytes eight(8);
    std::iota(eight.begin(), eight.end(), 1);
    const auto g8 = layout_grid(eight, 4);
    CHECK(g8.width == 4);
    CHECK(g8.height == 2);
    CHECK(g8.at(1, 0) == 5);

    Bytes nine(9);
    std::iota(nine.begin(), nine.end(), 1);
    const auto g9 = layout_grid(nine, 4);
    CHECK(g9.height == 3);
    CHECK(g9.at(2, 0) == 9);
    CHECK(g9.at(2, 1) == 0);
    CHECK(g9.at(2, 3) == 0);

    const auto g128 = layout_grid(Bytes(16384, 7), 128);
    CHECK(g128.width == 128);
    CHECK(g128.height == 128);

    CHECK_THROWS_AS(layout_grid(Bytes{}, 4), EmptyFileError);
    CHECK_THROWS_AS(layout_grid(eight, 0), UsageError);
}

TEST_CASE("layout_grid flattening reproduces the padded input") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const Bytes in = testutil::random_bytes(rng, 1 + rng.uniform_index(500));
        const auto w = static_cast<std::uint32_t>(1 + rng.uniform_index(40));
        const auto g = layout_grid(in, w);
        CHECK(g.data.size() == std::size_t{g.width} * g.height);
        CHECK(g.height == (in.size() + w - 1) / w);
        CHECK(g.data == truncate_pad(in, g.data.size()));
    }
}

TEST_CASE("load_binary reads file bytes") {
    testutil::TempDir dir("ingest");
    Rng rng(9);
    const Bytes bytes = testutil::random_bytes(rng, 777);
    testutil::write_file(dir / "fam/x.exe", bytes);
    const auto rb = load_binary(dir / "fam/x.exe", "fam");
    CHECK(rb.bytes == bytes);
    CHECK(rb.size_bytes() == 777);
    CHECK(rb.family == "fam");
    CHECK_THROWS_AS(read_file_bytes(dir / "missing"), IoError);
}
