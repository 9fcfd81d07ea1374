#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dave/aln.hpp"
#include "dave/common.hpp"
#include "dave/image.hpp"
#include "dave/png_io.hpp"

namespace dave {

struct Box {
    float x = 0, y = 0, w = 0, h = 0;

    float x2() const { return x + w; }
    float y2() const { return y + h; }
    float cx() const { return x + 0.5f * w; }
    float cy() const { return y + 0.5f * h; }
    float area() const { return w > 0 && h > 0 ? w * h : 0.f; }
};

inline Box clip_box(const Box& b, float img_w, float img_h) {
    const float x0 = std::clamp(b.x, 0.f, img_w);
    const float y0 = std::clamp(b.y, 0.f, img_h);
    const float x1 = std::clamp(b.x + b.w, 0.f, img_w);
    const float y1 = std::clamp(b.y + b.h, 0.f, img_h);
    return {x0, y0, std::max(0.f, x1 - x0), std::max(0.f, y1 - y0)};
}

/// One image plus its per-box labels (V,P,C,T vocabulary indices; 0 means
/// unavailable / catch-all).
struct AnnotationRecord {
    std::string image;  // path relative to the dataset root
    std::vector<Box> boxes;
    std::vector<AttributeLabels> labels;
};

inline const std::vector<std::string>& pose_names() {
    static const std::vector<std::string> v = {"front", "rear", "side", "frontside", "rearside"};
    return v;
}

inline const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v = {"black", "white", "silver", "red", "blue"};
    return v;
}

inline std::vector<std::string> type_names(int nt) {
    check_arg(nt == 6 || nt == 12, "type vocabulary must have 6 or 12 entries");
    std::vector<std::string> v = {"sedan", "suv", "minibus", "pickup", "hatchback", "sports"};
    if (nt == 12) {
        for (const char* s : {"mpv", "fastback", "estate", "crossover", "convertible", "hardtop-convertible"})
            v.push_back(s);
    }
    return v;
}

/// Attribute vocabularies. Real classes are 1-based; index 0 is reported as
/// "N/A" (background / catch-all).
struct Vocabulary {
    std::vector<std::string> pose = pose_names();
    std::vector<std::string> color = color_names();
    std::vector<std::string> type = type_names(6);

    static std::string name_of(const std::vector<std::string>& table, int label) {
        if (label == 0) return "N/A";
        check_arg(label >= 1 && label <= static_cast<int>(table.size()), "label out of vocabulary range");
        return table[static_cast<std::size_t>(label - 1)];
    }

    std::string pose_name(int l) const { return name_of(pose, l); }
    std::string color_name(int l) const { return name_of(color, l); }
    std::string type_name(int l) const { return name_of(type, l); }

    void validate() const {
        check_arg(pose == pose_names(), "vocabulary: unexpected pose names");
        check_arg(color == color_names(), "vocabulary: unexpected color names");
        check_arg(type.size() == 6 || type.size() == 12, "vocabulary: type list must have 6 or 12 names");
    }
};

struct DatasetManifest {
    std::string root;  // directory containing the manifest
    Vocabulary vocab;
    std::uint64_t seed = 0;
    std::vector<std::string> train, val, test;       // image ids
    std::map<std::string, AnnotationRecord> records;  // keyed by image id

    const std::vector<std::string>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw std::invalid_argument("unknown split: " + name);
    }

    const AnnotationRecord& record(const std::string& id) const {
        auto it = records.find(id);
        check_arg(it != records.end(), "no record for image id: " + id);
        return it->second;
    }
};

namespace detail {

inline void validate_record(const AnnotationRecord& rec, const Vocabulary& vocab) {
    check_arg(!rec.image.empty(), "record without image path");
    check_arg(rec.boxes.size() == rec.labels.size(), "record box/label count mismatch: " + rec.image);
    for (std::size_t i = 0; i < rec.boxes.size(); ++i) {
        const auto& b = rec.boxes[i];
        check_arg(b.w > 0 && b.h > 0 && b.x >= 0 && b.y >= 0,
                  "record has degenerate box: " + rec.image);
        const auto& l = rec.labels[i];
        check_arg(l.v == 0 || l.v == 1, "record V label out of range: " + rec.image);
        check_arg(l.p >= 0 && l.p <= static_cast<int>(vocab.pose.size()),
                  "record pose label out of range: " + rec.image);
        check_arg(l.c >= 0 && l.c <= static_cast<int>(vocab.color.size()),
                  "record color label out of range: " + rec.image);
        check_arg(l.t >= 0 && l.t <= static_cast<int>(vocab.type.size()),
                  "record type label out of range: " + rec.image);
    }
}

}  // namespace detail

inline void save_records(const std::string& path, const std::vector<AnnotationRecord>& records) {
    std::ofstream f(path, std::ios::trunc);
    check_state(f.good(), "cannot write records file: " + path);
    for (const auto& rec : records) {
        nlohmann::json j;
        j["image"] = rec.image;
        auto& boxes = j["boxes"] = nlohmann::json::array();
        for (const auto& b : rec.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
        auto& labels = j["labels"] = nlohmann::json::array();
        for (const auto& l : rec.labels) labels.push_back({l.v, l.p, l.c, l.t});
        f << j.dump() << "\n";
    }
    check_state(f.good(), "write failed: " + path);
}

inline std::vector<AnnotationRecord> load_records(const std::string& path, const Vocabulary& vocab) {
    std::ifstream f(path);
    check_state(f.good(), "cannot open records file: " + path);
    std::vector<AnnotationRecord> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        check_state(!j.is_discarded(), "malformed record line in " + path);
        AnnotationRecord rec;
        rec.image = j.at("image").get<std::string>();
        for (const auto& b : j.at("boxes"))
            rec.boxes.push_back({b.at(0).get<float>(), b.at(1).get<float>(), b.at(2).get<float>(),
                                 b.at(3).get<float>()});
        for (const auto& l : j.at("labels"))
            rec.labels.push_back({l.at(0).get<int>(), l.at(1).get<int>(), l.at(2).get<int>(),
                                  l.at(3).get<int>()});
        detail::validate_record(rec, vocab);
        out.push_back(std::move(rec));
    }
    return out;
}

inline void save_manifest(const std::string& dir, const DatasetManifest& m,
                          const std::vector<AnnotationRecord>& records) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_records((fs::path(dir) / "records.jsonl").string(), records);
    nlohmann::json j;
    j["seed"] = m.seed;
    j["records"] = "records.jsonl";
    j["vocab"] = {{"pose", m.vocab.pose}, {"color", m.vocab.color}, {"type", m.vocab.type}};
    j["splits"] = {{"train", m.train}, {"val", m.val}, {"test", m.test}};
    std::ofstream f((fs::path(dir) / "manifest.json").string(), std::ios::trunc);
    check_state(f.good(), "cannot write manifest in " + dir);
    f << j.dump(2) << "\n";
    check_state(f.good(), "manifest write failed in " + dir);
}

inline DatasetManifest load_manifest(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream f(manifest_path);
    check_state(f.good(), "cannot open manifest: " + manifest_path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest " + manifest_path + ": " + e.what());
    }
    DatasetManifest m;
    m.root = fs::path(manifest_path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    m.seed = j.value("seed", std::uint64_t{0});
    m.vocab.pose = j.at("vocab").at("pose").get<std::vector<std::string>>();
    m.vocab.color = j.at("vocab").at("color").get<std::vector<std::string>>();
    m.vocab.type = j.at("vocab").at("type").get<std::vector<std::string>>();
    m.vocab.validate();
    m.train = j.at("splits").at("train").get<std::vector<std::string>>();
    m.val = j.at("splits").at("val").get<std::vector<std::string>>();
    m.test = j.at("splits").at("test").get<std::vector<std::string>>();
    const auto rec_path = (fs::path(m.root) / j.value("records", "records.jsonl")).string();
    for (auto& rec : load_records(rec_path, m.vocab)) {
        std::string id = rec.image;
        m.records.emplace(std::move(id), std::move(rec));
    }
    for (const auto* split : {&m.train, &m.val, &m.test})
        for (const auto& id : *split)
            check_state(m.records.count(id), "split references unknown image id: " + id);
    return m;
}

/// Decodes one dataset image and checks the record's boxes against its
/// actual extents.
inline ImageF load_sample_image(const DatasetManifest& m, const AnnotationRecord& rec) {
    namespace fs = std::filesystem;
    const auto path = (fs::path(m.root) / rec.image).string();
    Image8 img8;
    try {
        img8 = read_png(path);
    } catch (const std::exception& e) {
        throw std::runtime_error("failed to load " + path + ": " + e.what());
    }
    for (const auto& b : rec.boxes)
        check_state(b.x2() <= static_cast<float>(img8.w) + 0.51f &&
                        b.y2() <= static_cast<float>(img8.h) + 0.51f,
                    "box outside image bounds in " + path);
    return to_imagef(img8);
}

struct LoadedSample {
    std::string id;
    ImageF image;
    AnnotationRecord record;
};

/// Epoch iterator over raw decoded samples, shuffled with the supplied
/// engine. Two iterators built with equal seeds yield identical order.
class RawSampleIterator {
public:
    RawSampleIterator(const DatasetManifest& manifest, const std::string& split, int batch_size,
                      std::mt19937_64& rng)
        : manifest_(manifest), batch_size_(batch_size) {
        check_arg(batch_size >= 1, "load_batches: batch size must be >= 1");
        ids_ = manifest.split(split);
        std::shuffle(ids_.begin(), ids_.end(), rng);
    }

    std::size_t num_batches() const { return (ids_.size() + batch_size_ - 1) / batch_size_; }

    bool next(std::vector<LoadedSample>& out) {
        out.clear();
        while (cursor_ < ids_.size() && static_cast<int>(out.size()) < batch_size_) {
            const auto& id = ids_[cursor_++];
            const auto& rec = manifest_.record(id);
            out.push_back({id, load_sample_image(manifest_, rec), rec});
        }
        return !out.empty();
    }

private:
    const DatasetManifest& manifest_;
    int batch_size_;
    std::vector<std::string> ids_;
    std::size_t cursor_ = 0;
};

struct SceneSample {
    ImageF image;
    std::vector<Box> boxes;
    std::vector<AttributeLabels> labels;
};

/// Intensity-triples the sample per the augmentation scheme: the first
/// variant is the untouched input; the other two get brightness factors
/// 0.6 / 1.4 plus an independent random downscale in [0.2, 1.0] and a
/// Gaussian blur with sigma in [0, 1.5]. Boxes follow the geometry.
inline std::vector<SceneSample> augment(const SceneSample& sample, std::mt19937_64& rng) {
    std::vector<SceneSample> out;
    out.push_back(sample);

    std::uniform_real_distribution<float> down(0.2f, 1.0f);
    std::uniform_real_distribution<float> blur(0.0f, 1.5f);
    for (float intensity : {0.6f, 1.4f}) {
        SceneSample v;
        ImageF img = scale_intensity(sample.image, intensity);
        const float sigma = blur(rng);
        if (sigma > 0.01f) img = gaussian_blur(img, sigma);
        const float f = down(rng);
        const int nw = std::max(8, static_cast<int>(std::lround(img.w * f)));
        const int nh = std::max(8, static_cast<int>(std::lround(img.h * f)));
        const float fx = static_cast<float>(nw) / img.w;
        const float fy = static_cast<float>(nh) / img.h;
        v.image = resize_bilinear(img, nw, nh);
        for (auto& px : v.image.pix) px = std::clamp(px, 0.f, 1.f);
        v.labels = sample.labels;
        for (const auto& b : sample.boxes)
            v.boxes.push_back(clip_box({b.x * fx, b.y * fy, b.w * fx, b.h * fy},
                                       static_cast<float>(nw), static_cast<float>(nh)));
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace dave
