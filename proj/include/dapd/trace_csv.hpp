#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <system_error>

#include "dapd/analysis.hpp"
#include "dapd/errors.hpp"

namespace dapd {

inline constexpr const char* kCsvColumns =
    "k,rel_err,eps,cons_z,cons_mu,cons_lambda,kkt_stat,kkt_primal,kkt_comp,margin_min";

namespace detail {

/// Fixed %.12e rendering so identical doubles always serialize to identical
/// bytes; non-finite values are spelled out so the file stays parseable.
inline void append_double(std::string& out, double v) {
    if (std::isnan(v)) {
        out += "nan";
        return;
    }
    if (std::isinf(v)) {
        out += v > 0 ? "inf" : "-inf";
        return;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    out += buf;
}

inline void append_kv(std::string& out, const char* key, double v) {
    out += "# ";
    out += key;
    out += "=";
    append_double(out, v);
    out += "\n";
}

}  // namespace detail

/// Render the full trace document: '#'-prefixed key=value metadata lines,
/// the column header, then one row per recorded round.
inline std::string render_trace_csv(const RunTrace& t) {
    std::string out;
    out.reserve(128 + t.rows.size() * 180);
    char buf[64];
    std::snprintf(buf, sizeof buf, "# config_hash=%016" PRIx64 "\n", t.config_hash);
    out += buf;
    std::snprintf(buf, sizeof buf, "# seed=%" PRIu64 "\n", t.seed);
    out += buf;
    detail::append_kv(out, "rho", t.rho);
    out += std::string("# stop_reason=") + to_string(t.stop_reason) + "\n";
    std::snprintf(buf, sizeof buf, "# iterations=%ld\n", t.iterations);
    out += buf;
    if (t.has_certificate) {
        const Certificate& c = t.certificate;
        out += std::string("# certificate_passed=") + (c.passed ? "1" : "0") + "\n";
        detail::append_kv(out, "certificate_tau", c.tau);
        detail::append_kv(out, "certificate_kappa", c.kappa);
        detail::append_kv(out, "certificate_kappa1", c.kappa1);
        detail::append_kv(out, "certificate_kappa2", c.kappa2);
        detail::append_kv(out, "certificate_c1", c.c1);
    }
    if (t.has_reference) {
        out += "# x_star=";
        for (long i = 0; i < t.x_star.size(); ++i) {
            if (i) out += ";";
            detail::append_double(out, t.x_star[i]);
        }
        out += "\n# lambda_star=";
        for (long i = 0; i < t.lambda_star.size(); ++i) {
            if (i) out += ";";
            detail::append_double(out, t.lambda_star[i]);
        }
        out += "\n";
    }
    out += kCsvColumns;
    out += "\n";
    for (const TraceRow& r : t.rows) {
        std::snprintf(buf, sizeof buf, "%ld", r.k);
        out += buf;
        for (double v : {r.rel_err, r.eps, r.cons_z, r.cons_mu, r.cons_lambda, r.kkt_stat,
                         r.kkt_primal, r.kkt_comp, r.margin_min}) {
            out += ",";
            detail::append_double(out, v);
        }
        out += "\n";
    }
    return out;
}

/// Atomic file write: a sibling temp file is populated, flushed, and renamed
/// over the target, so readers never observe a half-written trace.
inline void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        if (ec) throw ConfigError("cannot create output directory: " + target.parent_path().string());
    }
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::FILE* f = std::fopen(tmp.c_str(), "wb");
        if (!f) throw ConfigError("cannot open output file for writing: " + tmp.string());
        std::size_t n = std::fwrite(content.data(), 1, content.size(), f);
        int rc = std::fclose(f);
        if (n != content.size() || rc != 0) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw ConfigError("short write to output file: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw ConfigError("cannot move output file into place: " + path);
    }
}

inline void write_trace_csv(const std::string& path, const RunTrace& t) {
    write_file_atomic(path, render_trace_csv(t));
}

}  // namespace dapd
