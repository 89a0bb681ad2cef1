#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "a2r2/config.hpp"
#include "a2r2/error.hpp"
#include "a2r2/prompts.hpp"
#include "support.hpp"

using namespace a2r2;

TEST(Layers, CentralEighthOfFortyLayers) {
    EXPECT_EQ(central_eighth(40), (LayerRange{18, 22}));
}

TEST(Layers, CentralEighthShape) {
    for (int total = 1; total <= 128; ++total) {
        const auto r = central_eighth(total);
        EXPECT_EQ(r.count(), (total + 7) / 8) << total;
        EXPECT_GE(r.start, 0);
        EXPECT_LT(r.end, total);
        EXPECT_LE(r.start, total / 2);
        EXPECT_GE(r.end, std::min(total / 2, total - 1));
    }
    EXPECT_THROW(central_eighth(0), ConfigError);
}

TEST(Layers, ResolvePolicies) {
    RunConfig c;
    EXPECT_EQ(c.resolve_layers(40), (LayerRange{18, 22}));
    c.layer_policy = LayerPolicy::cross_attention;
    EXPECT_EQ(c.resolve_layers(40), (LayerRange{13, 13}));
    c.layer_range = LayerRange{2, 4};
    EXPECT_EQ(c.resolve_layers(40), (LayerRange{2, 4}));
}

TEST(RunConfigValidation, RejectsBrokenInvariants) {
    const auto bad = [](auto mutate) {
        RunConfig c;
        mutate(c);
        return c;
    };
    EXPECT_NO_THROW(RunConfig{}.validate());
    EXPECT_THROW(bad([](RunConfig& c) { c.t_max = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.percentile = 100; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.percentile = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.dilation_kernel = 4; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.layer_range = LayerRange{5, 3}; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.parallel_workers = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](RunConfig& c) { c.prompts.comparison = "{latex}"; }).validate(), ConfigError);
}

TEST(Settings, JsonRoundTrip) {
    Settings s;
    s.seed = 99;
    s.run.t_max = 4;
    s.run.layer_range = LayerRange{3, 7};
    s.curation.direction = "desc";
    const auto back = settings_from_json(settings_to_json(s));
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.run.t_max, 4);
    EXPECT_EQ(back.run.layer_range, (LayerRange{3, 7}));
    EXPECT_EQ(back.curation.direction, "desc");
    EXPECT_EQ(settings_to_json(back), settings_to_json(s));
}

TEST(Settings, UnknownKeysAreRejected) {
    EXPECT_THROW(settings_from_json({{"loop", {{"tmax", 3}}}}), ConfigError);
    EXPECT_THROW(settings_from_json({{"bogus", 1}}), ConfigError);
}

TEST(Settings, OverridesParseJsonOrString) {
    nlohmann::json tree = nlohmann::json::object();
    apply_override(tree, "loop.t_max=5");
    apply_override(tree, "backend.endpoint=mock:?errors=2");
    apply_override(tree, "localization.layer_range=[1,2]");
    EXPECT_EQ(tree["loop"]["t_max"], 5);
    EXPECT_EQ(tree["backend"]["endpoint"], "mock:?errors=2");
    EXPECT_EQ(tree["localization"]["layer_range"], nlohmann::json::array({1, 2}));
    EXPECT_THROW(apply_override(tree, "novalue"), ConfigError);
    EXPECT_THROW(apply_override(tree, "a..b=1"), ConfigError);
}

TEST(Settings, PrecedenceEnvThenFileThenOverride) {
    a2r2::testing::TempDir dir("config");
    const auto file = dir / "cfg.json";
    std::ofstream(file) << R"({"backend": {"endpoint": "mock:?seed=2"}, "loop": {"t_max": 3}})";

    ::setenv("A2R2_BACKEND_URL", "mock:?seed=1", 1);
    ::setenv("A2R2_CACHE_DIR", "/tmp/from-env", 1);
    const auto from_env = load_settings(std::nullopt, {});
    EXPECT_EQ(from_env.run.backend_endpoint, "mock:?seed=1");

    const auto from_file = load_settings(file, {});
    EXPECT_EQ(from_file.run.backend_endpoint, "mock:?seed=2");
    EXPECT_EQ(from_file.render.cache_dir, "/tmp/from-env");
    EXPECT_EQ(from_file.run.t_max, 3);

    const auto overridden = load_settings(file, {"backend.endpoint=mock:?seed=3", "loop.t_max=1"});
    EXPECT_EQ(overridden.run.backend_endpoint, "mock:?seed=3");
    EXPECT_EQ(overridden.run.t_max, 1);
    ::unsetenv("A2R2_BACKEND_URL");
    ::unsetenv("A2R2_CACHE_DIR");

    EXPECT_THROW(load_settings(dir / "missing.json", {}), ConfigError);
    EXPECT_THROW(load_settings(std::nullopt, {"loop.t_max=0"}), ConfigError);
}

TEST(Strategy, ParseAndPrint) {
    for (auto s : {Strategy::a2r2, Strategy::direct, Strategy::cot, Strategy::best_of_n}) {
        EXPECT_EQ(parse_strategy(to_string(s)), s);
    }
    EXPECT_THROW(parse_strategy("beam"), ConfigError);
}

TEST(Prompts, DefaultsValidateAndFill) {
    const auto p = PromptTemplates::defaults();
    EXPECT_NO_THROW(p.validate());
    const auto filled = fill_template(p.refinement, {{"latex", "x^2"}, {"diff", "1. d"}, {"image_a", "<A>"},
                                                     {"image_b", "<B>"}});
    EXPECT_NE(filled.find("x^2"), std::string::npos);
    EXPECT_NE(filled.find("<A>"), std::string::npos);
    EXPECT_EQ(filled.find("{latex}"), std::string::npos);
}

TEST(Prompts, UnknownPlaceholderThrows) {
    EXPECT_THROW(fill_template("see {nope}", {}), ConfigError);
    // Braces that are not identifiers pass through untouched.
    EXPECT_EQ(fill_template("\\frac{1 2}{ }", {}), "\\frac{1 2}{ }");
    auto p = PromptTemplates::defaults();
    p.generation += " {diff}";
    EXPECT_THROW(p.validate(), ConfigError);
}
