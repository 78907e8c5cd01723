#pragma once

// Touchstone v1 two-port (.s2p) reader and writer.

#include <fstream>
#include <sstream>

#include "kitamp/keyvalue.hpp"
#include "kitamp/network.hpp"

namespace kitamp::network {

enum class TouchstoneFormat { RI, MA, DB };

namespace detail_ts {

inline std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

inline cplx pair_to_complex(TouchstoneFormat fmt, double a, double b) {
    switch (fmt) {
    case TouchstoneFormat::RI: return {a, b};
    case TouchstoneFormat::MA: return std::polar(a, b * pi / 180.0);
    case TouchstoneFormat::DB: return std::polar(std::pow(10.0, a / 20.0), b * pi / 180.0);
    }
    return {};
}

} // namespace detail_ts

/// Parses a two-port Touchstone v1 stream. Data order per row is
/// f S11 S21 S12 S22; rows may wrap over several physical lines.
inline TwoPortNetwork read_touchstone(std::istream& in, const std::string& source = "<touchstone>") {
    double freq_scale = 1e9; // Touchstone default unit is GHz
    TouchstoneFormat fmt = TouchstoneFormat::MA;
    double z0 = 50.0;
    bool seen_options = false;

    TwoPortNetwork net;
    std::vector<double> pending;
    std::size_t pending_line = 0;
    std::string line;
    std::size_t lineno = 0;

    auto flush_row = [&]() {
        const double f = pending[0] * freq_scale;
        if (!net.freqs.empty() && !(f > net.freqs.back()))
            throw ParseError(source, pending_line, "frequencies must be strictly increasing");
        Mat2 s;
        s.m11 = detail_ts::pair_to_complex(fmt, pending[1], pending[2]);
        s.m21 = detail_ts::pair_to_complex(fmt, pending[3], pending[4]);
        s.m12 = detail_ts::pair_to_complex(fmt, pending[5], pending[6]);
        s.m22 = detail_ts::pair_to_complex(fmt, pending[7], pending[8]);
        net.freqs.push_back(f);
        net.s.push_back(s);
        pending.clear();
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (auto bang = line.find('!'); bang != std::string::npos) line.erase(bang);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            if (seen_options) throw ParseError(source, lineno, "duplicate option line");
            if (!net.freqs.empty() || !pending.empty())
                throw ParseError(source, lineno, "option line after data");
            seen_options = true;
            std::istringstream opts(t.substr(1));
            std::string tok;
            while (opts >> tok) {
                const std::string u = detail_ts::upper(tok);
                if (u == "HZ") freq_scale = 1.0;
                else if (u == "KHZ") freq_scale = 1e3;
                else if (u == "MHZ") freq_scale = 1e6;
                else if (u == "GHZ") freq_scale = 1e9;
                else if (u == "RI") fmt = TouchstoneFormat::RI;
                else if (u == "MA") fmt = TouchstoneFormat::MA;
                else if (u == "DB") fmt = TouchstoneFormat::DB;
                else if (u == "S") continue;
                else if (u == "Y" || u == "Z" || u == "H" || u == "G")
                    throw ParseError(source, lineno, "only S-parameter files are supported");
                else if (u == "R") {
                    std::string zs;
                    if (!(opts >> zs)) throw ParseError(source, lineno, "missing reference impedance");
                    auto z = detail::parse_double(zs);
                    if (!z || !(*z > 0.0)) throw ParseError(source, lineno, "bad reference impedance");
                    z0 = *z;
                } else
                    throw ParseError(source, lineno, "unknown option '" + tok + "'");
            }
            continue;
        }
        std::istringstream row(t);
        std::string tok;
        if (pending.empty()) pending_line = lineno;
        while (row >> tok) {
            auto v = detail::parse_double(tok);
            if (!v) throw ParseError(source, lineno, "not a number: '" + tok + "'");
            pending.push_back(*v);
            if (pending.size() == 9) {
                flush_row();
                pending_line = lineno;
            }
        }
    }
    if (!pending.empty()) throw ParseError(source, pending_line, "incomplete data row");
    if (net.freqs.empty()) throw ParseError(source, lineno, "no data rows");
    net.ref_impedance = z0;
    validate(net);
    return net;
}

inline TwoPortNetwork read_touchstone_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return read_touchstone(in, path);
}

/// Writes `# HZ S RI R <z0>` with shortest round-trip number formatting, so one
/// write/read cycle reproduces the doubles exactly.
inline void write_touchstone(const TwoPortNetwork& net, std::ostream& out) {
    validate(net);
    out << "! two-port S-parameters\n";
    out << "# HZ S RI R " << fmt_double(net.ref_impedance) << "\n";
    for (std::size_t i = 0; i < net.size(); ++i) {
        const Mat2& s = net.s[i];
        out << fmt_double(net.freqs[i]);
        for (const cplx& v : {s.m11, s.m21, s.m12, s.m22})
            out << ' ' << fmt_double(v.real()) << ' ' << fmt_double(v.imag());
        out << '\n';
    }
}

inline void write_touchstone_file(const TwoPortNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    write_touchstone(net, out);
}

} // namespace kitamp::network
