#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

#include "dipe/data.hpp"
#include "dipe/error.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using dipe::IndexRange;
using dipe::ModelConfig;

namespace {

dipe::RawDataset series(std::size_t rows, std::size_t channels, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    dipe::RawDataset ds;
    for (std::size_t c = 0; c < channels; ++c) ds.names.push_back("c" + std::to_string(c));
    ds.values = dipe::Matrix(rows, channels);
    ds.values.data = oracle::random_vector(rng, rows * channels);
    return ds;
}

}  // namespace

TEST_CASE("load_csv with a date column", "[data][csv]") {
    test_support::TempDir dir;
    const auto path = dir.write("small.csv",
                                "date,HUFL,OT\n"
                                "2016-07-01 00:00:00,5.827,30.531\n"
                                "2016-07-01 01:00:00,5.693,27.787\n"
                                "2016-07-01 02:00:00,-5.157,2.5e1\n");
    const auto ds = dipe::load_csv(path);
    CHECK(ds.rows() == 3);
    CHECK(ds.channels() == 2);
    CHECK(ds.names == std::vector<std::string>{"HUFL", "OT"});
    REQUIRE(ds.timestamps);
    CHECK(ds.timestamps->at(1) == "2016-07-01 01:00:00");
    CHECK(ds.values(2, 0) == -5.157);
    CHECK(ds.values(2, 1) == 25.0);
}

TEST_CASE("load_csv without a date column", "[data][csv]") {
    test_support::TempDir dir;
    const auto ds = dipe::load_csv(dir.write("plain.csv", "a,b,c\r\n1,2,3\r\n4,5,6\r\n\n"));
    CHECK(ds.rows() == 2);
    CHECK(ds.channels() == 3);
    CHECK_FALSE(ds.timestamps);
    CHECK(ds.values(1, 2) == 6.0);

    // A non-numeric first cell marks a timestamp column even without a "date" header.
    const auto stamped = dipe::load_csv(dir.write("stamped.csv", "when,x\nmon,1\ntue,2\n"));
    CHECK(stamped.timestamps);
    CHECK(stamped.names == std::vector<std::string>{"x"});
}

TEST_CASE("load_csv errors name the row and column", "[data][csv]") {
    test_support::TempDir dir;
    CHECK_THROWS_AS(dipe::load_csv(dir.path() / "missing.csv"), dipe::IoError);
    CHECK_THROWS_WITH(dipe::load_csv(dir.write("ragged.csv", "a,b\n1,2\n3\n")),
                      Catch::Matchers::ContainsSubstring("row 3"));
    CHECK_THROWS_AS(dipe::load_csv(dir.write("bad.csv", "date,a,b\nx,1,2\ny,1,oops\n")), dipe::IngestionError);
    CHECK_THROWS_WITH(dipe::load_csv(dir.write("bad2.csv", "date,a,b\nx,1,2\ny,1,oops\n")),
                      Catch::Matchers::ContainsSubstring("column 'b'"));
    CHECK_THROWS_AS(dipe::load_csv(dir.write("empty.csv", "a,b\n")), dipe::IngestionError);
}

TEST_CASE("load_csv on ETTh1 when available", "[data][csv][.dataset]") {
    const auto path = test_support::dataset_path("ETTh1.csv");
    if (!path) SKIP("ETTh1.csv not found (set DIPE_DATA_DIR)");
    const auto ds = dipe::load_csv(*path);
    CHECK(ds.rows() == 17420);
    CHECK(ds.channels() == 7);
}

TEST_CASE("split fractions and defaults", "[data][split]") {
    const auto ds = series(100, 2);
    const ModelConfig cfg{10, 5, 2, 1};
    const auto r = dipe::split(ds, {0.6, 0.2, 0.2}, cfg);
    CHECK(r.train == IndexRange{0, 60});
    CHECK(r.val == IndexRange{60, 80});
    CHECK(r.test == IndexRange{80, 100});

    const auto ett = dipe::SplitSpec::defaults_for("data/ETTh2.csv");
    CHECK((ett.train == 0.6 && ett.val == 0.2 && ett.test == 0.2));
    const auto other = dipe::SplitSpec::defaults_for("weather.csv");
    CHECK((other.train == 0.7 && other.val == 0.1 && other.test == 0.2));

    CHECK_THROWS_AS(dipe::split(ds, {0.5, 0.2, 0.2}, cfg), dipe::ParameterError);
    CHECK_NOTHROW(dipe::split(ds, {0.9, 0.05, 0.05}, cfg));
    CHECK_THROWS_AS(dipe::split(ds, {0.96, 0.02, 0.02}, cfg), dipe::DataError);
    const ModelConfig long_lookback{20, 5, 2, 1};
    CHECK_NOTHROW(dipe::split(ds, {0.6, 0.2, 0.2}, long_lookback, true));
    CHECK_THROWS_AS(dipe::split(ds, {0.6, 0.2, 0.2}, long_lookback, false), dipe::DataError);
}

TEST_CASE("window counts match exhaustive enumeration", "[data][windows][oracle]") {
    const ModelConfig cfg{10, 5, 1, 1};
    const std::size_t total = 90;
    for (const IndexRange range : {IndexRange{0, 30}, IndexRange{30, 60}, IndexRange{60, 90}, IndexRange{5, 35}}) {
        for (bool borrow : {true, false}) {
            std::vector<std::size_t> expected;
            for (std::size_t s = 0; s + cfg.lookback + cfg.horizon <= total; ++s) {
                const std::size_t t0 = s + cfg.lookback;
                const bool targets_inside = t0 >= range.begin && t0 + cfg.horizon <= range.end;
                const bool inputs_inside = borrow || s >= range.begin;
                if (targets_inside && inputs_inside) expected.push_back(s);
            }
            CHECK(dipe::window_starts(range, cfg, borrow) == expected);
            if (borrow && range.begin >= cfg.lookback) CHECK(expected.size() == range.size() - cfg.horizon + 1);
            if (!borrow) CHECK(expected.size() == range.size() - cfg.lookback - cfg.horizon + 1);
        }
    }
    CHECK(dipe::window_starts({0, 100}, cfg, false).size() == 86);
}

TEST_CASE("validation and test targets never leave their split", "[data][windows][property]") {
    const auto ds = series(500, 3);
    for (std::size_t horizon : {1u, 7u, 24u}) {
        const ModelConfig cfg{48, horizon, 3, 1};
        const auto r = dipe::split(ds, {0.7, 0.1, 0.2}, cfg);
        for (const auto* range : {&r.val, &r.test}) {
            for (std::size_t s : dipe::window_starts(*range, cfg, true)) {
                CHECK(s + cfg.lookback >= range->begin);
                CHECK(s + cfg.lookback + cfg.horizon <= range->end);
            }
        }
    }
}

TEST_CASE("fit_standardizer", "[data][standardize]") {
    dipe::RawDataset ds;
    ds.names = {"a", "b"};
    ds.values = dipe::Matrix(2, 2);
    ds.values(0, 0) = 1;
    ds.values(1, 0) = 3;
    ds.values(0, 1) = 5;
    ds.values(1, 1) = -5;
    const auto s = dipe::fit_standardizer(ds, {0, 2});
    CHECK(s.mean[0] == 2.0);
    CHECK(s.std[0] == 1.0);
    CHECK(s.mean[1] == 0.0);
    CHECK(s.std[1] == 5.0);

    ds.values(1, 1) = 5;
    CHECK_THROWS_WITH(dipe::fit_standardizer(ds, {0, 2}), Catch::Matchers::ContainsSubstring("'b'"));
    CHECK_THROWS_AS(dipe::fit_standardizer(ds, {1, 1}), dipe::DataError);

    // Two-pass oracle on a long channel, and round-trip.
    const auto big = series(1000, 1, 9);
    const auto st = dipe::fit_standardizer(big, {0, 1000});
    long double sum = 0;
    for (double v : big.values.data) sum += v;
    const long double mean = sum / 1000;
    long double sq = 0;
    for (double v : big.values.data) sq += (v - mean) * (v - mean);
    CHECK(std::abs(st.mean[0] - static_cast<double>(mean)) <= 1e-12);
    CHECK(std::abs(st.std[0] - static_cast<double>(std::sqrt(sq / 1000))) <= 1e-12);
    for (double v : big.values.data) CHECK(std::abs(st.invert(0, st.apply(0, v)) - v) <= 1e-12);

    // Standardizing already-standardized data is (nearly) the identity.
    dipe::RawDataset z = big;
    for (auto& v : z.values.data) v = st.apply(0, v);
    const auto again = dipe::fit_standardizer(z, {0, 1000});
    CHECK(std::abs(again.mean[0]) <= 1e-12);
    CHECK(std::abs(again.std[0] - 1.0) <= 1e-12);
}

TEST_CASE("statistics come from training rows only", "[data][standardize]") {
    auto ds = series(200, 2, 4);
    const ModelConfig cfg{16, 8, 2, 1};
    const auto before = dipe::prepare_data(ds, {0.6, 0.2, 0.2}, cfg);
    for (std::size_t r = 120; r < 200; ++r) ds.values(r, 0) += 1000.0;
    const auto after = dipe::prepare_data(ds, {0.6, 0.2, 0.2}, cfg);
    CHECK(before.scaler == after.scaler);
}

TEST_CASE("window iterator", "[data][windows]") {
    const auto ds = series(100, 2, 5);
    const ModelConfig cfg{10, 5, 2, 1};
    const auto scaler = dipe::fit_standardizer(ds, {0, 100});
    const IndexRange range{0, 100};

    SECTION("ascending order, standardized contents, short last batch") {
        auto it = dipe::windows(ds, range, scaler, cfg, 32, false, 0, false);
        CHECK(it.window_count() == 86);
        std::vector<std::size_t> seen;
        std::vector<std::size_t> sizes;
        while (auto b = it.next()) {
            sizes.push_back(b->size());
            for (std::size_t i = 0; i < b->size(); ++i) {
                const std::size_t s = b->starts[i];
                seen.push_back(s);
                CHECK(b->inputs[i](1, 3) == scaler.apply(1, ds.values(s + 3, 1)));
                CHECK(b->targets[i](0, 0) == scaler.apply(0, ds.values(s + 10, 0)));
            }
        }
        CHECK(sizes == std::vector<std::size_t>{32, 32, 22});
        std::vector<std::size_t> ascending(86);
        std::iota(ascending.begin(), ascending.end(), 0);
        CHECK(seen == ascending);
    }
    SECTION("shuffle is a seeded permutation independent of batch size") {
        auto collect = [&](std::size_t batch, std::uint64_t seed) {
            auto it = dipe::windows(ds, range, scaler, cfg, batch, true, seed, false);
            std::vector<std::size_t> order;
            while (auto b = it.next()) order.insert(order.end(), b->starts.begin(), b->starts.end());
            return order;
        };
        const auto a = collect(16, 42);
        CHECK(a == collect(16, 42));
        CHECK(a != collect(16, 43));
        CHECK(a == collect(7, 42));
        CHECK(std::multiset<std::size_t>(a.begin(), a.end()).size() == 86);
        CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 86);
    }
    SECTION("errors") {
        CHECK_THROWS_AS(dipe::windows(ds, {0, 12}, scaler, cfg, 8, false, 0, false), dipe::DataError);
        CHECK_THROWS_AS(dipe::windows(ds, range, scaler, cfg, 0, false, 0, false), dipe::ParameterError);
    }
}
