#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "beamcast/errors.hpp"
#include "beamcast/pipeline/preprocess.hpp"

using namespace beamcast;
using namespace beamcast::pipeline;

namespace {

Image random_image(int h, int w, Rng& rng)
{
    Image img(h, w);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = static_cast<float>(rng.uniform());
    }
    return img;
}

} // namespace

TEST(Augment, EvalModeIsIdentity)
{
    Rng rng(1);
    const Image img = random_image(8, 8, rng);
    EXPECT_TRUE(augment_image(img, rng, false) == img);
}

TEST(Augment, FlipIsAnInvolution)
{
    Rng rng(2);
    const Image img = random_image(5, 7, rng);
    EXPECT_FALSE(hflip(img) == img);
    EXPECT_TRUE(hflip(hflip(img)) == img);

    AugmentConfig forced;
    forced.flip_probability = 1.0;
    forced.pad = 0;
    EXPECT_TRUE(augment_image(augment_image(img, rng, true, forced), rng, true, forced) == img);
}

TEST(Augment, CentredCropRecoversImage)
{
    Rng rng(3);
    const Image img = random_image(32, 32, rng);
    EXPECT_TRUE(pad_crop(img, 16, 16, 16) == img);
}

TEST(Augment, ShiftedCropMovesContentAndZeroFills)
{
    Rng rng(4);
    const Image img = random_image(6, 6, rng);
    const Image out = pad_crop(img, 2, 0, 4); // source = (y - 2, x + 2)
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 6; ++y) {
            for (int x = 0; x < 6; ++x) {
                const int sy = y - 2, sx = x + 2;
                const float expected = (sy >= 0 && sx < 6) ? img.at(c, sy, sx) : 0.0f;
                EXPECT_EQ(out.at(c, y, x), expected);
            }
        }
    }
}

TEST(Augment, PreservesShapeAndRange)
{
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const Image img = random_image(32, 32, rng);
        const Image out = augment_image(img, rng, true);
        EXPECT_EQ(out.height, 32);
        EXPECT_EQ(out.width, 32);
        EXPECT_GE(out.pixels.minCoeff(), 0.0f);
        EXPECT_LE(out.pixels.maxCoeff(), 1.0f);
    }
}

TEST(Augment, FlipFrequencyNearConfiguredProbability)
{
    Rng rng(6);
    Image img(1, 2);
    img.at(0, 0, 0) = 1.0f;
    AugmentConfig cfg;
    cfg.pad = 0;
    int flipped = 0;
    const int trials = 4000;
    for (int i = 0; i < trials; ++i) {
        flipped += augment_image(img, rng, true, cfg).at(0, 0, 1) == 1.0f ? 1 : 0;
    }
    // 3 binomial sigma around 0.5
    EXPECT_NEAR(flipped / static_cast<double>(trials), 0.5, 3.0 * std::sqrt(0.25 / trials));
}

TEST(Normalize, ImageNetConstants)
{
    Image img(1, 1);
    img.at(0, 0, 0) = 0.485f;
    img.at(1, 0, 0) = 0.456f;
    img.at(2, 0, 0) = 0.406f;
    const Image out = normalize_image(img);
    EXPECT_EQ(out.at(0, 0, 0), 0.0f);
    EXPECT_EQ(out.at(1, 0, 0), 0.0f);
    EXPECT_EQ(out.at(2, 0, 0), 0.0f);

    img.at(0, 0, 0) = 1.0f;
    EXPECT_NEAR(normalize_image(img).at(0, 0, 0), 2.2489, 1e-4);
}

TEST(Normalize, RoundTrip)
{
    Rng rng(7);
    const Image img = random_image(9, 9, rng);
    EXPECT_LT((denormalize_image(normalize_image(img)).pixels - img.pixels).abs().maxCoeff(), 1e-6f);
    EXPECT_LT((normalize_image(denormalize_image(img)).pixels - img.pixels).abs().maxCoeff(), 1e-6f);
}

TEST(Normalize, NonPositiveStdRejected)
{
    ImageNormConstants c;
    c.std[1] = 0.0f;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Resize, IdentityAndConstant)
{
    Rng rng(8);
    const Image img = random_image(6, 10, rng);
    EXPECT_TRUE(resize_bilinear(img, 6, 10) == img);
    const Image flat(4, 4, 0.3f);
    const Image big = resize_bilinear(flat, 9, 13);
    EXPECT_LT((big.pixels - 0.3f).abs().maxCoeff(), 1e-6f);
}

TEST(Scaler, MidpointAndEndpoints)
{
    std::vector<FeatureVec> train(2);
    train[0].fill(2.0f);
    train[1].fill(4.0f);
    const auto s = StructScaler::fit(train);
    FeatureVec x;
    x.fill(3.0f);
    EXPECT_FLOAT_EQ(s.apply(x)[0], 0.5f);
    EXPECT_EQ(s.apply(train[0])[3], 0.0f);
    EXPECT_EQ(s.apply(train[1])[7], 1.0f);
}

TEST(Scaler, DegenerateFeatureMapsToZero)
{
    std::vector<FeatureVec> train(3);
    for (std::size_t i = 0; i < 3; ++i) {
        train[i].fill(static_cast<float>(i));
        train[i][5] = 7.0f;
    }
    const auto s = StructScaler::fit(train);
    FeatureVec x;
    x.fill(100.0f);
    EXPECT_EQ(s.apply(x)[5], 0.0f);
    EXPECT_TRUE(std::isfinite(s.apply(x)[5]));
}

TEST(Scaler, TestValuesAreNotClipped)
{
    std::vector<FeatureVec> train(2);
    train[0].fill(0.0f);
    train[1].fill(10.0f);
    const auto s = StructScaler::fit(train);
    FeatureVec x;
    x.fill(12.0f);
    EXPECT_FLOAT_EQ(s.apply(x)[0], 1.2f);
    x.fill(-1.0f);
    EXPECT_FLOAT_EQ(s.apply(x)[0], -0.1f);
}

TEST(Scaler, TrainingSplitLandsInUnitInterval)
{
    Rng rng(9);
    std::vector<FeatureVec> train(200);
    for (auto& f : train) {
        for (auto& v : f) {
            v = static_cast<float>(rng.normal(5.0, 30.0));
        }
    }
    const auto s = StructScaler::fit(train);
    std::array<bool, 8> hit0{}, hit1{};
    for (const auto& f : train) {
        const auto y = s.apply(f);
        for (std::size_t i = 0; i < 8; ++i) {
            EXPECT_GE(y[i], 0.0f);
            EXPECT_LE(y[i], 1.0f);
            hit0[i] = hit0[i] || y[i] == 0.0f;
            hit1[i] = hit1[i] || y[i] == 1.0f;
        }
    }
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_TRUE(hit0[i] && hit1[i]);
    }
}

TEST(Scaler, FitIgnoresTestSplit)
{
    Rng rng(10);
    std::vector<FeatureVec> all(100);
    for (auto& f : all) {
        for (auto& v : f) {
            v = static_cast<float>(rng.uniform(-3, 3));
        }
    }
    all[95].fill(50.0f); // extreme value only in the test split
    const auto split = split_dataset(all.size(), {0.8, 3});
    auto pick = [&](const std::vector<std::size_t>& idx) {
        std::vector<FeatureVec> out;
        for (auto i : idx) {
            out.push_back(all[i]);
        }
        return out;
    };
    const auto train = pick(split.train);
    const auto scaler = StructScaler::fit(train);
    const auto leaky = StructScaler::fit(all);
    const bool extreme_in_test = std::find(split.test.begin(), split.test.end(), 95U) != split.test.end();
    if (extreme_in_test) {
        EXPECT_NE(scaler.max, leaky.max);
    }
    // the training-split artifacts depend only on the training rows
    const auto again = StructScaler::fit(train);
    EXPECT_EQ(scaler.min, again.min);
    EXPECT_EQ(scaler.max, again.max);
    for (const auto& f : train) {
        EXPECT_LE(scaler.apply(f)[0], 1.0f);
    }
}

TEST(Split, CountsDisjointAndExhaustive)
{
    const auto s = split_dataset(10, {0.8, 1});
    EXPECT_EQ(s.train.size(), 8U);
    EXPECT_EQ(s.test.size(), 2U);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (auto i : s.test) {
        EXPECT_TRUE(all.insert(i).second);
    }
    EXPECT_EQ(all.size(), 10U);
    EXPECT_EQ(*all.rbegin(), 9U);
}

TEST(Split, DeterministicPerSeed)
{
    const auto a = split_dataset(500, {0.8, 42});
    const auto b = split_dataset(500, {0.8, 42});
    const auto c = split_dataset(500, {0.8, 43});
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(a.train, c.train);
}

TEST(Split, Validation)
{
    EXPECT_THROW(split_dataset(1, {0.8, 1}), ConfigError);
    EXPECT_THROW(split_dataset(10, {1.0, 1}), ConfigError);
}

TEST(Batches, SizesAndOrder)
{
    std::vector<std::size_t> idx(100);
    std::iota(idx.begin(), idx.end(), 0U);
    Rng rng(11);
    const auto batches = make_batches(idx, 32, rng, false);
    ASSERT_EQ(batches.size(), 4U);
    EXPECT_EQ(batches[0].size(), 32U);
    EXPECT_EQ(batches[3].size(), 4U);
    std::vector<std::size_t> flat;
    for (const auto& b : batches) {
        flat.insert(flat.end(), b.begin(), b.end());
    }
    EXPECT_EQ(flat, idx);
}

TEST(Batches, ShuffledIsPermutation)
{
    std::vector<std::size_t> idx(77);
    std::iota(idx.begin(), idx.end(), 5U);
    Rng rng(12);
    const auto batches = make_batches(idx, 10, rng, true);
    std::vector<std::size_t> flat;
    for (const auto& b : batches) {
        flat.insert(flat.end(), b.begin(), b.end());
    }
    EXPECT_NE(flat, idx);
    std::sort(flat.begin(), flat.end());
    EXPECT_EQ(flat, idx);
    EXPECT_THROW(make_batches(idx, 0, rng, true), ConfigError);
}
