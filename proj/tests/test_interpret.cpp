#include <catch_amalgamated.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dipe/error.hpp"
#include "dipe/interpret.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using dipe::Matrix;
using dipe::ModelConfig;

namespace {

const double kMaxDistance = std::sqrt(std::log(2.0));

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(n);
    double sum = 0.0;
    for (auto& v : p) sum += (v = u(rng));
    for (auto& v : p) v /= sum;
    return p;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

double parse(const std::string& s) {
    double v = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
}

dipe::Checkpoint random_checkpoint(std::mt19937_64& rng, const ModelConfig& cfg) {
    dipe::Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = dipe::init_params(cfg, rng());
    for (auto& e : ckpt.params.experts) e.sfa_gain = oracle::random_vector(rng, e.sfa_gain.size());
    if (ckpt.params.router) ckpt.params.router->logits.data = oracle::random_vector(rng, cfg.rank * cfg.channels, 2.0);
    ckpt.scaler = {std::vector<double>(cfg.channels, 0.0), std::vector<double>(cfg.channels, 1.0)};
    for (std::size_t c = 0; c < cfg.channels; ++c) ckpt.channel_names.push_back("ch" + std::to_string(c));
    return ckpt;
}

}  // namespace

TEST_CASE("kl_divergence", "[interpret][kl]") {
    const std::vector<double> p{1.0, 0.0};
    const std::vector<double> half{0.5, 0.5};
    CHECK(dipe::kl_divergence(half, half) == 0.0);
    CHECK(dipe::kl_divergence(p, half) == Catch::Approx(std::log(2.0)).epsilon(1e-15));
    // q = 0 where p > 0 hits the floor instead of dividing by zero.
    CHECK(dipe::kl_divergence(half, p) == Catch::Approx(0.5 * std::log(0.5) + 0.5 * std::log(0.5 / 1e-12)).epsilon(1e-12));

    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_simplex(rng, 5);
        const auto b = random_simplex(rng, 5);
        double direct = 0.0;
        for (std::size_t i = 0; i < 5; ++i) direct += a[i] * std::log(a[i] / b[i]);
        CHECK(dipe::kl_divergence(a, b) == Catch::Approx(direct).epsilon(1e-12));
        CHECK(dipe::kl_divergence(a, b) >= 0.0);
        CHECK(dipe::kl_divergence(a, a) == 0.0);
    }

    CHECK_THROWS_AS(dipe::kl_divergence(std::vector<double>{0.5, 0.6}, half), dipe::ParameterError);
    CHECK_THROWS_AS(dipe::kl_divergence(std::vector<double>{1.5, -0.5}, half), dipe::ParameterError);
    CHECK_THROWS_AS(dipe::kl_divergence(std::vector<double>{1.0}, half), dipe::ParameterError);
}

TEST_CASE("jsd", "[interpret][jsd]") {
    const std::vector<double> a{1.0, 0.0};
    const std::vector<double> b{0.0, 1.0};
    CHECK(dipe::jsd(a, a) == 0.0);
    CHECK(dipe::jsd(a, b) == Catch::Approx(0.832554611157698).epsilon(1e-14));
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = random_simplex(rng, 4);
        const auto q = random_simplex(rng, 4);
        CHECK(dipe::jsd(p, q) == dipe::jsd(q, p));
        CHECK(dipe::jsd(p, q) <= kMaxDistance + 1e-12);
    }
}

TEST_CASE("jsd_matrix", "[interpret][jsd]") {
    SECTION("identical columns") {
        const ModelConfig cfg{8, 4, 3, 2};
        auto params = dipe::init_params(cfg, 1);
        CHECK(dipe::jsd_matrix(params, cfg) == Matrix(3, 3, 0.0));
    }
    SECTION("one-hot columns on different experts") {
        const ModelConfig cfg{8, 4, 2, 2};
        auto params = dipe::init_params(cfg, 1);
        params.router->logits(0, 0) = 800.0;
        params.router->logits(1, 1) = 800.0;
        const auto d = dipe::jsd_matrix(params, cfg);
        CHECK(d(0, 1) == Catch::Approx(kMaxDistance).epsilon(1e-12));
        CHECK(d(1, 0) == d(0, 1));
    }
    SECTION("random router invariants") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 10; ++trial) {
            const ModelConfig cfg{8, 4, 5, 3};
            auto params = dipe::init_params(cfg, 1, 0.5 + trial * 0.3);
            params.router->logits.data = oracle::random_vector(rng, 15, 3.0);
            const auto d = dipe::jsd_matrix(params, cfg);
            for (std::size_t i = 0; i < 5; ++i) {
                CHECK(d(i, i) == 0.0);
                for (std::size_t j = 0; j < 5; ++j) {
                    CHECK(std::abs(d(i, j) - d(j, i)) <= 1e-12);
                    CHECK(d(i, j) <= kMaxDistance + 1e-12);
                    CHECK(d(i, j) >= 0.0);
                }
            }
        }
    }
    SECTION("single expert") {
        const ModelConfig cfg{8, 4, 3, 1};
        CHECK_THROWS_AS(dipe::jsd_matrix(dipe::init_params(cfg, 1), cfg), dipe::UnsupportedConfigError);
    }
}

TEST_CASE("equivalent_kernel", "[interpret][kernel][oracle]") {
    const ModelConfig cfg{20, 9, 1, 1};
    auto w = dipe::ExpertWeights::identity(cfg);
    std::fill(w.ifm_weight.begin(), w.ifm_weight.end(), dipe::Complex{1.0, 0.0});
    auto impulse = std::vector<double>(cfg.pad_length(), 0.0);
    impulse[0] = 1.0;
    CHECK(oracle::max_abs_diff(dipe::equivalent_kernel(w, cfg), impulse) <= 1e-15);

    std::fill(w.ifm_weight.begin(), w.ifm_weight.end(), dipe::Complex{});
    CHECK(dipe::equivalent_kernel(w, cfg) == std::vector<double>(cfg.pad_length(), 0.0));

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        w.ifm_weight = oracle::random_complex(rng, cfg.freq_pad());
        w.ifm_weight[0] = w.ifm_weight[0].real();  // N = 28 is even: DC and Nyquist must be real
        w.ifm_weight.back() = w.ifm_weight.back().real();
        const auto kernel = dipe::equivalent_kernel(w, cfg);
        CHECK(kernel.size() == cfg.pad_length());
        CHECK(oracle::max_abs_diff(oracle::naive_rdft(kernel), w.ifm_weight) <= 1e-10);

        const auto z = oracle::random_vector(rng, cfg.lookback);
        const auto conv = oracle::circular_convolve(dipe::zero_pad(z, cfg.pad_length()), kernel);
        const auto direct = dipe::ifm_forward(z, w, cfg);
        CHECK(oracle::max_abs_diff(direct, std::span(conv).last(cfg.horizon)) <= 1e-8);
    }
}

TEST_CASE("export_weights", "[interpret][export]") {
    test_support::TempDir dir;
    std::mt19937_64 rng(5);

    SECTION("single expert writes three files") {
        const auto ckpt = random_checkpoint(rng, {16, 8, 2, 1});
        const auto files = dipe::export_weights(ckpt, dir.path() / "m1");
        REQUIRE(files.size() == 3);
        CHECK_FALSE(std::filesystem::exists(dir.path() / "m1" / "router.csv"));

        const auto sfa = read_csv(dir.path() / "m1" / "sfa_expert0.csv");
        REQUIRE(sfa.size() == ckpt.config.freq_in() + 1);
        CHECK(sfa[0] == std::vector<std::string>{"bin", "gain"});
        for (std::size_t k = 0; k < ckpt.config.freq_in(); ++k) {
            CHECK(sfa[k + 1][0] == std::to_string(k));
            CHECK(parse(sfa[k + 1][1]) == ckpt.params.experts[0].sfa_gain[k]);
        }

        const auto ifm = read_csv(dir.path() / "m1" / "ifm_expert0.csv");
        REQUIRE(ifm.size() == ckpt.config.freq_pad() + 1);
        CHECK(ifm[0].size() == 9);
        for (std::size_t k = 0; k < ckpt.config.freq_pad(); ++k) {
            const auto z = ckpt.params.experts[0].ifm_weight[k];
            CHECK(parse(ifm[k + 1][1]) == z.real());
            CHECK(parse(ifm[k + 1][2]) == z.imag());
            CHECK(parse(ifm[k + 1][3]) == std::abs(z));
            CHECK(parse(ifm[k + 1][4]) == std::arg(z));
            CHECK(parse(ifm[k + 1][5]) == ckpt.params.experts[0].ifm_bias[k].real());
        }
        CHECK(read_csv(dir.path() / "m1" / "sta_expert0.csv").size() == 17);
    }
    SECTION("four experts, 21 channels") {
        const auto ckpt = random_checkpoint(rng, {16, 8, 21, 4});
        const auto files = dipe::export_weights(ckpt, dir.path() / "m4");
        CHECK(files.size() == 14);
        const auto router = read_csv(dir.path() / "m4" / "router.csv");
        REQUIRE(router.size() == 5);
        CHECK(router[0].size() == 22);
        const auto coef = dipe::router_normalize(*ckpt.params.router);
        for (std::size_t c = 0; c < 21; ++c) {
            double col = 0.0;
            for (std::size_t m = 0; m < 4; ++m) {
                CHECK(parse(router[m + 1][c + 1]) == coef(m, c));
                col += parse(router[m + 1][c + 1]);
            }
            CHECK(col == Catch::Approx(1.0).epsilon(1e-12));
        }
        const auto jsd = read_csv(dir.path() / "m4" / "jsd.csv");
        REQUIRE(jsd.size() == 22);
        CHECK(jsd[0][1] == "ch0");
        const auto d = dipe::jsd_matrix(ckpt.params, ckpt.config);
        for (std::size_t i = 0; i < 21; ++i) {
            REQUIRE(jsd[i + 1].size() == 22);
            for (std::size_t j = 0; j < 21; ++j) CHECK(parse(jsd[i + 1][j + 1]) == d(i, j));
        }
    }
    SECTION("unwritable destination") {
        const auto ckpt = random_checkpoint(rng, {16, 8, 2, 1});
        const auto blocker = dir.write("plain_file", "x");
        CHECK_THROWS_AS(dipe::export_weights(ckpt, blocker / "sub"), dipe::IoError);
    }
}
