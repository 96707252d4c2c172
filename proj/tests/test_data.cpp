#include <softcal/data.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace softcal;

namespace {

// Multiclass perceptron on [x, 1]; returns true once an epoch makes no mistakes.
bool perceptron_separates(const Dataset& ds, int max_epochs = 10000) {
    const std::size_t stride = ds.d_in + 1;
    std::vector<double> w(ds.num_classes * stride, 0.0);
    auto score = [&](std::size_t c, std::size_t i) {
        double s = w[c * stride + ds.d_in];
        for (std::size_t j = 0; j < ds.d_in; ++j) s += w[c * stride + j] * ds.row(i)[j];
        return s;
    };
    for (int e = 0; e < max_epochs; ++e) {
        bool clean = true;
        for (std::size_t i = 0; i < ds.n; ++i) {
            const std::size_t y = ds.labels[i];
            std::size_t best = y == 0 ? 1 : 0;
            for (std::size_t c = 0; c < ds.num_classes; ++c) {
                if (c != y && score(c, i) > score(best, i)) best = c;
            }
            if (score(y, i) > score(best, i)) continue;
            clean = false;
            for (std::size_t j = 0; j < ds.d_in; ++j) {
                w[y * stride + j] += ds.row(i)[j];
                w[best * stride + j] -= ds.row(i)[j];
            }
            w[y * stride + ds.d_in] += 1.0;
            w[best * stride + ds.d_in] -= 1.0;
        }
        if (clean) return true;
    }
    return false;
}

std::vector<unsigned char> be32(std::initializer_list<std::uint32_t> words) {
    std::vector<unsigned char> out;
    for (auto v : words) {
        out.push_back(static_cast<unsigned char>(v >> 24));
        out.push_back(static_cast<unsigned char>(v >> 16));
        out.push_back(static_cast<unsigned char>(v >> 8));
        out.push_back(static_cast<unsigned char>(v));
    }
    return out;
}

}  // namespace

TEST(Blobs, TightClustersAreSeparable) {
    const Dataset ds = gen_blobs(100, 2, 2, 0.1, 7);
    EXPECT_EQ(ds.n, 100u);
    EXPECT_TRUE(perceptron_separates(ds));
}

TEST(BlobsProperty, SeparableAcrossSeedsAndShapes) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (std::size_t k : {2, 3, 5, 8}) {
            for (std::size_t d : {1, 2, 6}) {
                if (d == 1 && k > 2) continue;
                EXPECT_TRUE(perceptron_separates(gen_blobs(120, d, k, 0.5, seed)))
                    << "seed=" << seed << " k=" << k << " d=" << d;
            }
        }
    }
}

TEST(Blobs, DeterministicAndSingleClass) {
    EXPECT_EQ(gen_blobs(50, 3, 2, 0.2, 1).hash, gen_blobs(50, 3, 2, 0.2, 1).hash);
    EXPECT_NE(gen_blobs(50, 3, 2, 0.2, 1).hash, gen_blobs(50, 3, 2, 0.2, 2).hash);
    const Dataset one = gen_blobs(10, 2, 1, 0.2, 3);
    for (auto l : one.labels) EXPECT_EQ(l, 0u);
    EXPECT_THROW(gen_blobs(10, 2, 2, 0.0, 3), InputDomainError);
}

TEST(Split, EightyTwentyPartition) {
    const Dataset ds = gen_blobs(101, 2, 3, 0.3, 4);
    EXPECT_EQ(ds.train.size(), 81u);
    EXPECT_EQ(ds.test.size(), 20u);
    std::set<std::size_t> all(ds.train.begin(), ds.train.end());
    all.insert(ds.test.begin(), ds.test.end());
    EXPECT_EQ(all.size(), 101u);
    EXPECT_EQ(gen_blobs(101, 2, 3, 0.3, 4).train, ds.train);
}

TEST(Idx, ParsesImageHeader) {
    std::vector<unsigned char> img = be32({0x803, 2, 2, 2});
    for (unsigned char b : {0, 51, 102, 153, 204, 255, 0, 255}) img.push_back(b);
    const IdxImages parsed = parse_idx_images(img);
    EXPECT_EQ(parsed.count, 2u);
    EXPECT_EQ(parsed.rows, 2u);
    EXPECT_EQ(parsed.cols, 2u);
    EXPECT_DOUBLE_EQ(parsed.pixels[1], 0.2);
    EXPECT_DOUBLE_EQ(parsed.pixels[5], 1.0);
}

TEST(Idx, ParsesLabels) {
    std::vector<unsigned char> lab = be32({0x801, 2});
    lab.push_back(1);
    lab.push_back(0);
    EXPECT_EQ(parse_idx_labels(lab), (std::vector<std::uint32_t>{1, 0}));
}

TEST(Idx, ErrorsCarryOffsets) {
    try {
        parse_idx_images(be32({0, 2, 2, 2}));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
    try {
        parse_idx_images(be32({0x803, 2, 2, 2}));  // no payload
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 16u);
    }
    try {
        parse_idx_labels(be32({0x801}));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
    std::vector<unsigned char> img = be32({0x803, 1, 1, 1});
    img.push_back(7);
    std::vector<unsigned char> lab = be32({0x801, 2});
    lab.push_back(0);
    lab.push_back(1);
    try {
        dataset_from_idx(img, lab);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 4u);
        EXPECT_NE(std::string(e.what()).find("offset 4"), std::string::npos);
    }
}

TEST(Idx, WriteReadRoundTripWithSubset) {
    const auto dir = std::filesystem::temp_directory_path() / "softcal_idx_test";
    std::filesystem::create_directories(dir);
    Vector f;
    std::vector<std::uint32_t> labels;
    for (std::uint32_t i = 0; i < 12; ++i) {
        f.push_back(i / 255.0);
        f.push_back((200 - i) / 255.0);
        labels.push_back(i % 3);
    }
    const Dataset ds = make_dataset(f, labels, 2, 3);
    write_idx(ds, (dir / "img").string(), (dir / "lab").string(), 1, 2);
    const Dataset back = read_idx((dir / "img").string(), (dir / "lab").string());
    EXPECT_EQ(back.features, ds.features);
    EXPECT_EQ(back.labels, ds.labels);
    IdxOptions opts;
    opts.per_class = 2;
    const Dataset sub = read_idx((dir / "img").string(), (dir / "lab").string(), opts);
    EXPECT_EQ(sub.n, 6u);
    EXPECT_EQ(sub.labels, (std::vector<std::uint32_t>{0, 1, 2, 0, 1, 2}));
    EXPECT_DOUBLE_EQ(sub.row(5)[0], 5 / 255.0);
    EXPECT_THROW(read_idx((dir / "missing").string(), (dir / "lab").string()), ParseError);
    std::filesystem::remove_all(dir);
}

TEST(Csv, HeaderAndRows) {
    const Dataset ds = make_dataset(Vector{0.5, 1.0}, {1}, 2, 2);
    EXPECT_EQ(to_csv(ds), "label,f0,f1\n1,0.5,1\n");
}
