#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

using namespace arcee;

TEST(Config, DefaultsRoundTripToFixedPoint) {
    const ExperimentConfig c;
    const std::string text = c.canonical();
    const ExperimentConfig back = parse_experiment_config(text);
    EXPECT_EQ(back.canonical(), text);
    EXPECT_EQ(back.hash(), c.hash());
}

TEST(Config, ParsesValuesAndComments) {
    const auto c = parse_experiment_config(R"(
seed = 7   # run seed
[network]
depth = 3
arcee = true
readout = "post"
[trainer]
lr = 1e-3
[ablate]
k = [1, 2]
)");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.network.depth, 3);
    EXPECT_TRUE(c.network.arcee_enabled);
    EXPECT_EQ(c.network.readout, Readout::post);
    EXPECT_DOUBLE_EQ(c.trainer.lr, 1e-3);
    EXPECT_EQ(c.ablate_k, (std::vector<std::int64_t>{1, 2}));
}

TEST(Config, HashIgnoresOrderAndWhitespace) {
    const auto a = parse_experiment_config("[trainer]\nsteps = 10\nbatch = 2\n[network]\ndepth = 2\n");
    const auto b = parse_experiment_config("[network]\n  depth=2\n\n[trainer]\nbatch = 2  \nsteps = 10\n");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 16u);
    const auto c = parse_experiment_config("[trainer]\nsteps = 11\nbatch = 2\n[network]\ndepth = 2\n");
    EXPECT_NE(a.hash(), c.hash());
}

TEST(Config, RejectsUnknownKeysAndSections) {
    EXPECT_THROW(parse_experiment_config("[network]\nwidth_mult = 2\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("[optimizer]\nlr = 1.0\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("colour = 1\n"), ConfigError);
}

TEST(Config, RejectsBadValues) {
    EXPECT_THROW(parse_experiment_config("[network]\ndepth = \"six\"\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("[network]\ndepth = 1x\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("[network\n"), ConfigError);
    EXPECT_THROW(parse_experiment_config("[network]\nk = 3\n"), InvalidArgument);
}

TEST(Config, FloatsKeepDecimalPoint) {
    EXPECT_EQ(format_value(ConfigValue(1.0)), "1.0");
    EXPECT_EQ(format_value(ConfigValue(0.001)), "0.001");
    EXPECT_EQ(format_value(ConfigValue(std::int64_t(3))), "3");
    const ConfigValue back = parse_config("x = " + format_value(ConfigValue(1e-20)))[""]["x"];
    EXPECT_EQ(std::get<double>(back), 1e-20);
}

TEST(Config, BudgetHashIgnoresArceeOnly) {
    ExperimentConfig on, off;
    on.network.arcee_enabled = true;
    EXPECT_EQ(on.budget_hash(), off.budget_hash());
    EXPECT_NE(on.hash(), off.hash());
    off.trainer.steps += 1;
    EXPECT_NE(on.budget_hash(), off.budget_hash());
}

TEST(Config, GridSizeComesFromData) {
    const auto c = parse_experiment_config("[data]\nheight = 4\nwidth = 6\n");
    EXPECT_EQ(c.network.height, 4);
    EXPECT_EQ(c.network.width, 6);
}

TEST(TensorDump, RoundTripBothDtypes) {
    std::mt19937_64 rng(1);
    const Mat<double> m = arcee::testing::random_mat(rng, 3, 5);
    std::stringstream ss;
    write_tensor(ss, m);
    EXPECT_EQ(ss.str().substr(0, 15), "ARC1 f64 2 3 5\n");
    EXPECT_EQ(read_matrix<double>(ss), m);

    const Mat<float> f = m.cast<float>();
    std::stringstream fs;
    write_tensor(fs, f);
    EXPECT_EQ(fs.str().size(), std::string("ARC1 f32 2 3 5\n").size() + 15 * 4);
    EXPECT_EQ(read_matrix<float>(fs), f);
}

TEST(TensorDump, LittleEndianPayload) {
    std::stringstream ss;
    const double one = 1.0;
    write_tensor<double>(ss, {1}, &one);
    const std::string s = ss.str();
    const std::string payload = s.substr(s.find('\n') + 1);
    ASSERT_EQ(payload.size(), 8u);
    EXPECT_EQ(static_cast<unsigned char>(payload[7]), 0x3f);
    EXPECT_EQ(static_cast<unsigned char>(payload[6]), 0xf0);
    EXPECT_EQ(static_cast<unsigned char>(payload[0]), 0x00);
}

TEST(TensorDump, RejectsBadHeader) {
    std::stringstream ss("ARC2 f64 1 1\n");
    EXPECT_THROW(read_tensor<double>(ss), FormatError);
    std::stringstream ss2("ARC1 i8 1 1\n");
    EXPECT_THROW(read_tensor<double>(ss2), FormatError);
}

TEST(Pgm, GrayMapping) {
    EXPECT_EQ(to_gray(-1.0), 0);
    EXPECT_EQ(to_gray(1.0), 255);
    EXPECT_EQ(to_gray(0.0), 128);  // 127.5 rounds to even
    EXPECT_EQ(to_gray(-2.0), 0);
    EXPECT_EQ(to_gray(3.0), 255);
}

TEST(Pgm, GridShapeAndRoundTrip) {
    Mat<double> samples = Mat<double>::Constant(5, 6, -1.0);
    samples(4, 5) = 1.0;
    const GrayImage img = make_image_grid(samples, 2, 3);
    EXPECT_EQ(img.width, 9);   // ceil(sqrt(5)) = 3 tiles across
    EXPECT_EQ(img.height, 4);  // 2 tile rows
    // sample 4 sits at grid (1, 1); its last pixel is (3, 5)
    EXPECT_EQ(img.pixels[3 * 9 + 5], 255);
    std::stringstream ss;
    write_pgm(ss, img);
    EXPECT_EQ(ss.str().substr(0, 11), "P5\n9 4\n255\n");
    const GrayImage back = read_pgm(ss);
    EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Checkpoint, RoundTrip) {
    const auto cfg = arcee::testing::tiny_network_config(true);
    auto p = arcee::testing::random_network(cfg, 2);
    std::stringstream ss;
    write_checkpoint(ss, p);
    auto q = NetworkParams<double>::zeros(cfg);
    read_checkpoint(ss, q);
    auto ep = p.entries(), eq = q.entries();
    for (std::size_t i = 0; i < ep.size(); ++i) EXPECT_EQ(*ep[i].tensor, *eq[i].tensor) << ep[i].name;
}

TEST(Checkpoint, ShapeMismatchRejected) {
    auto p = arcee::testing::random_network(arcee::testing::tiny_network_config(true, 2), 3);
    std::stringstream ss;
    write_checkpoint(ss, p);
    auto q = NetworkParams<double>::zeros(arcee::testing::tiny_network_config(true, 3));
    EXPECT_THROW(read_checkpoint(ss, q), FormatError);
}
