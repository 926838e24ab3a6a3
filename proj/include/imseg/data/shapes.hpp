#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "imseg/core/errors.hpp"

namespace imseg {

enum class Domain { A, B };

inline char domain_char(Domain d) { return d == Domain::A ? 'A' : 'B'; }
inline Domain domain_from_string(const std::string& s) {
    if (s == "A" || s == "a")
        return Domain::A;
    if (s == "B" || s == "b")
        return Domain::B;
    throw ArgumentError("unknown domain '" + s + "' (A|B)");
}

/// Ellipse in [-1,1]² coordinates (x = column axis, y = row axis), semi-axes
/// a along the rotated x axis and b along the rotated y axis.
struct Ellipse {
    double cx = 0, cy = 0, a = 0.5, b = 0.5, theta = 0;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(theta), s = std::sin(theta);
        const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
        return u * u + v * v <= 1.0;
    }
};

/// Star-convex blob: radius r0·(1 + Σ_k amp_k·cos((k+2)·φ + phase_k)).
struct StarBlob {
    double cx = 0, cy = 0, r0 = 0.4;
    std::vector<double> amp, phase;

    double radius(double angle) const {
        double r = 1.0;
        for (std::size_t k = 0; k < amp.size(); ++k)
            r += amp[k] * std::cos(static_cast<double>(k + 2) * angle + phase[k]);
        return r0 * r;
    }
    double min_radius() const {
        double s = 0.0;
        for (double a : amp)
            s += std::abs(a);
        return r0 * (1.0 - s);
    }
    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        return std::hypot(dx, dy) <= radius(std::atan2(dy, dx));
    }
};

struct ShapePrimitive {
    int label = 1;
    std::variant<Ellipse, StarBlob> geometry;

    bool contains(double x, double y) const {
        return std::visit([&](const auto& g) { return g.contains(x, y); }, geometry);
    }
};

/// Analytic ground truth of one sample. A point's label is the largest
/// label among the primitives containing it, 0 when none does.
struct ShapeSet {
    Domain domain = Domain::A;
    int n_classes = 2;
    std::vector<ShapePrimitive> primitives;

    int label_at(double x, double y) const {
        int best = 0;
        for (const auto& p : primitives)
            if (p.label > best && p.contains(x, y))
                best = p.label;
        return best;
    }

    /// Labels at the cell centers of a res×res grid, row-major.
    std::vector<std::uint8_t> rasterize(std::size_t res) const {
        std::vector<std::uint8_t> out(res * res);
        for (std::size_t i = 0; i < res; ++i)
            for (std::size_t j = 0; j < res; ++j) {
                const double x = -1.0 + (2.0 * j + 1.0) / static_cast<double>(res);
                const double y = -1.0 + (2.0 * i + 1.0) / static_cast<double>(res);
                out[i * res + j] = static_cast<std::uint8_t>(label_at(x, y));
            }
        return out;
    }
};

/// Text form, one record per line:
///   domain <A|B>
///   classes <n>
///   ellipse <label> <cx> <cy> <a> <b> <theta>
///   star <label> <cx> <cy> <r0> <K> <amp_1> <phase_1> ... <amp_K> <phase_K>
/// Numbers use 17 significant digits so parsing restores them exactly.
inline std::string to_text(const ShapeSet& s) {
    std::ostringstream os;
    os.precision(17);
    os << "domain " << domain_char(s.domain) << "\nclasses " << s.n_classes << '\n';
    for (const auto& p : s.primitives) {
        if (const auto* e = std::get_if<Ellipse>(&p.geometry)) {
            os << "ellipse " << p.label << ' ' << e->cx << ' ' << e->cy << ' ' << e->a << ' ' << e->b << ' '
               << e->theta << '\n';
        } else {
            const auto& st = std::get<StarBlob>(p.geometry);
            os << "star " << p.label << ' ' << st.cx << ' ' << st.cy << ' ' << st.r0 << ' ' << st.amp.size();
            for (std::size_t k = 0; k < st.amp.size(); ++k)
                os << ' ' << st.amp[k] << ' ' << st.phase[k];
            os << '\n';
        }
    }
    return os.str();
}

inline ShapeSet shape_from_text(const std::string& text) {
    ShapeSet s;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    bool have_domain = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        auto fail = [&] { return FormatError("shape line " + std::to_string(line_no) + ": '" + line + "'"); };
        if (kind == "domain") {
            std::string d;
            ls >> d;
            s.domain = domain_from_string(d);
            have_domain = true;
        } else if (kind == "classes") {
            ls >> s.n_classes;
        } else if (kind == "ellipse") {
            ShapePrimitive p;
            Ellipse e;
            ls >> p.label >> e.cx >> e.cy >> e.a >> e.b >> e.theta;
            p.geometry = e;
            if (!ls)
                throw fail();
            s.primitives.push_back(p);
        } else if (kind == "star") {
            ShapePrimitive p;
            StarBlob st;
            std::size_t k = 0;
            ls >> p.label >> st.cx >> st.cy >> st.r0 >> k;
            st.amp.resize(k);
            st.phase.resize(k);
            for (std::size_t i = 0; i < k; ++i)
                ls >> st.amp[i] >> st.phase[i];
            if (!ls)
                throw fail();
            p.geometry = st;
            s.primitives.push_back(p);
        } else {
            throw fail();
        }
    }
    if (!have_domain || s.primitives.empty())
        throw FormatError("shape text lacks a domain line or primitives");
    return s;
}

} // namespace imseg
