#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "imseg/core/errors.hpp"
#include "imseg/data/generator.hpp"
#include "imseg/data/pnm.hpp"
#include "imseg/data/shapes.hpp"

namespace imseg {

namespace fs = std::filesystem;

inline const char* const kSplitNames[3] = {"train", "val", "test"};

/// Four space-separated normalized floats, newline-terminated.
inline std::string bbox_to_text(const BoundingBox& b) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %.9g\n", b.x0, b.y0, b.x1, b.y1);
    return buf;
}

inline BoundingBox bbox_from_text(const std::string& text) {
    std::istringstream is(text);
    BoundingBox b;
    if (!(is >> b.x0 >> b.y0 >> b.x1 >> b.y1))
        throw FormatError("bbox needs four numbers, got '" + text + "'");
    std::string rest;
    if (is >> rest)
        throw FormatError("trailing data after bbox: '" + rest + "'");
    return b;
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out || !(out << s))
        throw DataError("cannot write " + p.string());
}

/// Writes `<root>/<domain>/<split>/<id>.{ppm,mask.pgm,bbox.txt,shape.txt}`.
inline void save_sample(const fs::path& dir, const Sample& s) {
    fs::create_directories(dir);
    write_image(dir / (s.id + ".ppm"), s.image);
    write_mask(dir / (s.id + ".mask.pgm"), s.mask);
    write_text(dir / (s.id + ".bbox.txt"), bbox_to_text(s.bbox));
    write_text(dir / (s.id + ".shape.txt"), to_text(s.shape));
}

inline Sample load_sample(const fs::path& dir, const std::string& id) {
    Sample s;
    s.id = id;
    s.image = read_image(dir / (id + ".ppm"));
    s.mask = read_mask(dir / (id + ".mask.pgm"));
    s.bbox = bbox_from_text(read_text(dir / (id + ".bbox.txt")));
    s.shape = shape_from_text(read_text(dir / (id + ".shape.txt")));
    s.domain = s.shape.domain;
    s.n_classes = s.shape.n_classes;
    if (s.mask.width != s.image.width || s.mask.height != s.image.height)
        throw DataError("sample " + id + ": mask and image extents differ");
    return s;
}

/// Every sample of one split, ordered by id.
inline std::vector<Sample> load_split(const fs::path& root, Domain domain, const std::string& split_name) {
    const fs::path dir = root / std::string(1, domain_char(domain)) / split_name;
    if (!fs::is_directory(dir))
        throw DataError("missing split directory " + dir.string());
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.size() > 4 && name.ends_with(".ppm"))
            ids.push_back(name.substr(0, name.size() - 4));
    }
    std::sort(ids.begin(), ids.end());
    std::vector<Sample> out;
    for (const auto& id : ids)
        out.push_back(load_sample(dir, id));
    if (out.empty())
        throw DataError("split directory " + dir.string() + " holds no samples");
    return out;
}

/// Domains with a subdirectory under `root`, A before B.
inline std::vector<Domain> domains_in(const fs::path& root) {
    std::vector<Domain> d;
    for (Domain x : {Domain::A, Domain::B})
        if (fs::is_directory(root / std::string(1, domain_char(x))))
            d.push_back(x);
    return d;
}

/// Generates, splits and writes one domain.
inline SplitIndices write_dataset(const fs::path& root, const DomainSpec& spec, std::size_t n, std::size_t res,
                                  std::uint64_t seed) {
    const auto samples = generate(spec, n, res, seed);
    const auto parts = split(n, seed);
    const fs::path base = root / std::string(1, domain_char(spec.domain));
    const std::vector<std::size_t>* groups[3] = {&parts.train, &parts.val, &parts.test};
    for (int k = 0; k < 3; ++k) {
        fs::create_directories(base / kSplitNames[k]);
        for (auto i : *groups[k])
            save_sample(base / kSplitNames[k], samples[i]);
    }
    return parts;
}

} // namespace imseg
