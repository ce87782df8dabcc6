#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "hdrisk/datagen.hpp"

using namespace hdrisk;

namespace {

SyntheticSpec make_spec(int n, int p, std::uint64_t seed) {
    SyntheticSpec s;
    s.n = n;
    s.p = p;
    s.seed = seed;
    return s;
}

} // namespace

TEST_CASE("noiseless zero signal gives a zero response") {
    SyntheticSpec s = make_spec(10, 4, 3);
    s.beta_prior = SyntheticSpec::BetaPrior::constant(0.0);
    s.noise_sd = 0.0;
    GeneratedData g = generate(s);
    CHECK(g.data.y.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(g.beta_star.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(g.noise.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("design columns are near unit norm") {
    GeneratedData g = generate(make_spec(1000, 40, 11));
    for (int j = 0; j < 40; ++j) {
        double norm = g.data.X.col(j).norm();
        CHECK(norm >= 0.9);
        CHECK(norm <= 1.1);
    }
}

TEST_CASE("design entries have variance close to 1/n") {
    GeneratedData g = generate(make_spec(500, 20, 8));
    double mean = g.data.X.mean();
    double var = (g.data.X.array() - mean).square().sum() / (500.0 * 20 - 1);
    CHECK(var * 500.0 >= 0.95);
    CHECK(var * 500.0 <= 1.05);
}

TEST_CASE("signal prior variance is honored") {
    SyntheticSpec s = make_spec(2, 5000, 17);
    s.beta_prior = SyntheticSpec::BetaPrior::gaussian(4.0);
    GeneratedData g = generate(s);
    double mean_sq = g.beta_star.squaredNorm() / 5000.0;
    CHECK(mean_sq >= 4.0 * 0.95);
    CHECK(mean_sq <= 4.0 * 1.05);

    SyntheticSpec c = make_spec(4, 3, 1);
    c.beta_prior = SyntheticSpec::BetaPrior::constant(2.5);
    CHECK((generate(c).beta_star.array() == 2.5).all());
}

TEST_CASE("generation is reproducible and seed-sensitive") {
    SyntheticSpec s = make_spec(50, 10, 99);
    GeneratedData a = generate(s);
    GeneratedData b = generate(s);
    CHECK((a.data.X - b.data.X).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.data.y - b.data.y).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.beta_star - b.beta_star).lpNorm<Eigen::Infinity>() == 0.0);

    s.seed = 100;
    GeneratedData c = generate(s);
    CHECK((a.data.X - c.data.X).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("component streams are independent") {
    // Changing the noise level must rescale the noise and touch nothing else.
    SyntheticSpec s = make_spec(40, 8, 5);
    s.noise_sd = 1.0;
    GeneratedData a = generate(s);
    s.noise_sd = 2.0;
    GeneratedData b = generate(s);
    CHECK((a.data.X - b.data.X).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.beta_star - b.beta_star).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((b.noise - 2.0 * a.noise).lpNorm<Eigen::Infinity>() <= 1e-15);
    CHECK((b.data.y - b.data.X * b.beta_star - b.noise).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("test draws share the training scale") {
    SyntheticSpec s = make_spec(250, 10, 7);
    GeneratedData g = generate(s);
    TestData t = generate_test(s, g.beta_star, 2000, 42);
    REQUIRE(t.X_new.rows() == 2000);
    REQUIRE(t.X_new.cols() == 10);
    REQUIRE(t.y_new.size() == 2000);
    // entries stay at variance 1/n for the *training* n, not the draw count
    double mean = t.X_new.mean();
    double var = (t.X_new.array() - mean).square().sum() / (2000.0 * 10 - 1);
    CHECK(var * 250.0 >= 0.9);
    CHECK(var * 250.0 <= 1.1);
    Vector noise = t.y_new - t.X_new * g.beta_star;
    double nsd = std::sqrt(noise.squaredNorm() / 2000.0);
    CHECK(nsd >= 0.94);
    CHECK(nsd <= 1.06);

    TestData t2 = generate_test(s, g.beta_star, 2000, 42);
    CHECK((t.X_new - t2.X_new).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((t.y_new - t2.y_new).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("coefficient files round trip") {
    Vector beta(4);
    beta << 0.1, -2.5, 1.0 / 3.0, 8.25e-13;
    std::filesystem::path path = std::filesystem::temp_directory_path() / "hdrisk_beta_rt.csv";
    save_beta_csv(beta, path.string());
    Vector back = load_beta_csv(path.string());
    REQUIRE(back.size() == 4);
    CHECK((back - beta).lpNorm<Eigen::Infinity>() == 0.0);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_beta_csv(path.string()), std::invalid_argument);
}

TEST_CASE("specification validation") {
    CHECK_THROWS_AS(generate(make_spec(1, 3, 1)), std::invalid_argument);
    CHECK_THROWS_AS(generate(make_spec(5, 0, 1)), std::invalid_argument);
    SyntheticSpec bad = make_spec(5, 2, 1);
    bad.noise_sd = -0.5;
    CHECK_THROWS_AS(generate(bad), std::invalid_argument);
    CHECK_THROWS_AS(SyntheticSpec::BetaPrior::gaussian(-1.0), std::invalid_argument);
}
