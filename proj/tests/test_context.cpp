#include <doctest.h>

#include <cmath>

#include "egghand/context.hpp"
#include "egghand/error.hpp"
#include "egghand/nn/gradcheck.hpp"
#include "support.hpp"

using namespace egghand;
using namespace egghand::context;

TEST_CASE("grid tokens: per-cell mean colour and cell centres") {
    std::vector<float> frame(dataio::kFrameValues, 0.0f);
    // Cell (row 2, col 5) fully red; one green pixel in cell (0, 0).
    for (int y = 64; y < 96; ++y)
        for (int x = 160; x < 192; ++x) frame[(static_cast<std::size_t>(y) * 224 + x) * 3] = 1.0f;
    frame[1] = 1.0f;
    const nn::Tensor t = grid_frame_tokens(frame);
    REQUIRE(t.shape() == nn::Shape{49, 5});
    CHECK(t.at(2 * 7 + 5, 0) == 1.0);
    CHECK(t.at(2 * 7 + 5, 1) == 0.0);
    CHECK(t.at(0, 1) == 1.0 / 1024.0);
    CHECK(t.at(0, 3) == 16.0 / 224.0);
    CHECK(t.at(2 * 7 + 5, 3) == 176.0 / 224.0);
    CHECK(t.at(2 * 7 + 5, 4) == 80.0 / 224.0);
    CHECK_THROWS_AS(grid_frame_tokens(std::vector<float>(10)), Error);

    std::vector<float> two(frame);
    two.insert(two.end(), frame.begin(), frame.end());
    const nn::Tensor both = grid_vision_tokens(two, 2);
    CHECK(both.shape() == nn::Shape{98, 5});
    CHECK(both.at(49 + 19, 0) == 1.0);
}

TEST_CASE("hashed text: unit vectors, case folding, truncation and empty text") {
    const nn::Tensor a = hashed_text_tokens("Grasp  GENTLY", 16);
    REQUIRE(a.shape() == nn::Shape{2, 16});
    const nn::Tensor b = hashed_text_tokens("grasp gently", 16);
    CHECK(a == b);
    for (std::size_t r = 0; r < 2; ++r) {
        double n = 0.0;
        for (std::size_t c = 0; c < 16; ++c) n += a.at(r, c) * a.at(r, c);
        CHECK(n == doctest::Approx(1.0).epsilon(1e-14));
    }
    auto expected = [](const std::string& word, int d) {
        nn::Prng rng(nn::fnv1a64(word));
        std::vector<double> v(static_cast<std::size_t>(d));
        double n = 0.0;
        for (auto& x : v) {
            x = rng.gaussian();
            n += x * x;
        }
        for (auto& x : v) x /= std::sqrt(n);
        return v;
    };
    const auto grasp = expected("grasp", 16);
    for (std::size_t c = 0; c < 16; ++c) CHECK(a.at(0, c) == grasp[c]);
    CHECK(hashed_text_tokens("", 8).shape() == nn::Shape{1, 8});
    const nn::Tensor empty = hashed_text_tokens("", 8);
    const auto blank = expected("", 8);
    for (std::size_t c = 0; c < 8; ++c) CHECK(empty.at(0, c) == blank[c]);
    CHECK(hashed_text_tokens("a b c d e", 4, 3).rows() == 3);
    CHECK(tokenize_words(" Wave\tQuickly ") == std::vector<std::string>{"wave", "quickly"});
}

TEST_CASE("sinusoidal encodings") {
    const auto e = sinusoidal_encoding(3.0, 8);
    CHECK(e[0] == std::sin(3.0));
    CHECK(e[1] == std::cos(3.0));
    CHECK(e[2] == doctest::Approx(std::sin(3.0 / std::pow(10000.0, 2.0 / 8))).epsilon(1e-15));
    CHECK(e[7] == doctest::Approx(std::cos(3.0 / std::pow(10000.0, 6.0 / 8))).epsilon(1e-15));
    const std::vector<double> pos{0.0, 2.0, 2.0, 5.0};
    const nn::Tensor table = encoding_table(pos, 6);
    for (std::size_t r = 0; r < pos.size(); ++r) {
        const auto row = sinusoidal_encoding(pos[r], 6);
        for (std::size_t c = 0; c < 6; ++c) CHECK(table.at(r, c) == row[c]);
    }
}

TEST_CASE("adapt_and_fuse: shapes, concatenation order and encodings") {
    RawContext raw;
    raw.visual = nn::random_tensor({6, 5}, 1);
    raw.visual_time = {0, 0, 0, 7, 7, 7};
    raw.text = nn::random_tensor({2, 4}, 2);
    AdapterParams p{nn::random_tensor({5, 8}, 3), nn::random_tensor({8}, 4), nn::random_tensor({4, 8}, 5),
                    nn::random_tensor({8}, 6)};
    const ContextTokens plain = adapt_and_fuse(raw, p, false);
    const ContextTokens enc = adapt_and_fuse(raw, p, true);
    REQUIRE(enc.fused.shape() == nn::Shape{8, 8});
    CHECK(enc.visual.shape() == nn::Shape{6, 8});
    CHECK(enc.textual.shape() == nn::Shape{2, 8});
    for (std::size_t c = 0; c < 8; ++c) {
        double v = p.b_vision[c];
        for (std::size_t k = 0; k < 5; ++k) v += raw.visual.at(4, k) * p.w_vision.at(k, c);
        CHECK(plain.fused.at(4, c) == doctest::Approx(v).epsilon(1e-14));
        CHECK(enc.fused.at(4, c) - plain.fused.at(4, c) == doctest::Approx(sinusoidal_encoding(7.0, 8)[c]).epsilon(1e-12));
        CHECK(enc.fused.at(7, c) - plain.fused.at(7, c) == doctest::Approx(sinusoidal_encoding(1.0, 8)[c]).epsilon(1e-12));
        CHECK(enc.textual.at(1, c) == enc.fused.at(7, c));
    }
    RawContext bad = raw;
    bad.visual = nn::random_tensor({6, 4}, 1);
    CHECK_THROWS_AS(adapt_and_fuse(bad, p), Error);
}

TEST_CASE("ablations: noise frames, dummy text and per-sample seeding") {
    const auto noise = corrupt_vision(2, 17);
    CHECK(noise.size() == 2 * dataio::kFrameValues);
    double mean = 0.0;
    for (float v : noise) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        mean += v;
    }
    CHECK(std::abs(mean / static_cast<double>(noise.size()) - 0.5) < 0.01);
    CHECK(corrupt_vision(2, 17) == noise);

    const auto vocab = task_vocabulary();
    CHECK(vocab.size() == 5);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto words = tokenize_words(dummy_text(vocab, s));
        CHECK(words.size() >= 1);
        CHECK(words.size() <= 3);
        for (const auto& w : words) CHECK(std::find(vocab.begin(), vocab.end(), w) != vocab.end());
    }
    CHECK_THROWS_AS(dummy_text({}, 1), Error);
}

TEST_CASE("build_raw_context: sources and ablation switches") {
    dataio::SynthConfig config;
    config.n_clips = 1;
    config.frames_per_clip = 30;
    config.store_frames = true;
    const auto clip = dataio::synthesize_clip(config, 0);
    const auto samples = dataio::make_windows(clip.record);
    REQUIRE(samples.size() == 1);
    const auto& s = samples[0];

    const RawContext clean = build_raw_context(clip.record, s);
    CHECK(clean.vision_source == VisionSource::Precomputed);
    CHECK(clean.visual.shape() == nn::Shape{4 * 49, 5});
    CHECK(clean.visual_time[49] == 6.0);
    CHECK(clean.text == hashed_text_tokens(clip.record.text, 16));

    auto no_tokens = clip.record;
    no_tokens.vision_tokens.reset();
    const RawContext grid = build_raw_context(no_tokens, s);
    CHECK(grid.vision_source == VisionSource::ToyGrid);
    // Stored tokens are the grid features rounded to binary32.
    nn::Tensor rounded = grid.visual;
    for (double& v : rounded.values()) v = static_cast<float>(v);
    CHECK(rounded == clean.visual);

    ContextOptions ablate;
    ablate.noisy_vision = true;
    ablate.dummy_text = true;
    ablate.seed = 4;
    const RawContext noisy = build_raw_context(clip.record, s, ablate);
    CHECK(noisy.vision_source == VisionSource::Noise);
    CHECK(noisy.text_source == TextSource::Dummy);
    CHECK(noisy.visual.shape() == clean.visual.shape());
    CHECK(build_raw_context(clip.record, s, ablate).visual == noisy.visual);

    auto bare = no_tokens;
    bare.frames.reset();
    CHECK_THROWS_AS(build_raw_context(bare, s), Error);
}
