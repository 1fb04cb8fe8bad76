// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dorf/io.hpp"

#include "binary_io.hpp"
#include "dorf/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dorf {

namespace {

std::uint32_t checked_u32(std::size_t n, const char* what) {
    if (n > UINT32_MAX) {
        throw InvalidInput(std::string(what) + " does not fit in 32 bits");
    }
    return static_cast<std::uint32_t>(n);
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

bool parse_double(std::string_view tok, double& out) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) {
        tok.remove_prefix(1);
    }
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) {
        tok.remove_suffix(1);
    }
    if (!tok.empty() && tok.front() == '+') {
        tok.remove_prefix(1);
    }
    if (tok.empty()) {
        return false;
    }
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace

void write_csi(const std::filesystem::path& path, const CsiTrial& trial) {
    detail::ByteWriter w;
    w.magic("DORFCSI1");
    w.u32(checked_u32(trial.frames(), "T"));
    w.u32(checked_u32(trial.subcarriers(), "N_sub"));
    w.u32(checked_u32(trial.antennas(), "A"));
    const CsiMetadata& m = trial.metadata();
    w.f64(m.sample_rate_hz);
    w.f64(m.carrier_hz);
    w.f64(m.subcarrier_spacing_hz);
    w.u32(m.activity_label);
    w.u32(m.subject_id);
    for (const cdouble& h : trial.samples()) {
        w.f32(static_cast<float>(h.real()));
        w.f32(static_cast<float>(h.imag()));
    }
    w.save(path);
}

CsiTrial read_csi(const std::filesystem::path& path) {
    auto r = detail::ByteReader::from_file(path);
    r.expect_magic("DORFCSI1");
    CsiShape shape;
    shape.frames = r.u32();
    shape.subcarriers = r.u32();
    shape.antennas = r.u32();
    CsiMetadata m;
    m.sample_rate_hz = r.f64();
    m.carrier_hz = r.f64();
    m.subcarrier_spacing_hz = r.f64();
    m.activity_label = r.u32();
    m.subject_id = r.u32();
    r.need(shape.size() * 8);
    std::vector<cdouble> samples(shape.size());
    for (cdouble& h : samples) {
        const float re = r.f32();
        const float im = r.f32();
        h = cdouble(re, im);
    }
    r.expect_end();
    try {
        return CsiTrial(shape, m, std::move(samples));
    } catch (const InvalidInput& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

CsiTrial import_csi_csv(std::istream& in, const CsvImportOptions& opts) {
    const std::size_t expected = 2 * opts.subcarriers * opts.antennas;
    std::vector<cdouble> samples;
    std::size_t frames = 0;
    std::size_t line_no = 0;
    bool first_content = true;
    std::string line;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view(line);
        const std::size_t first = view.find_first_not_of(" \t\r");
        if (first == std::string_view::npos || view[first] == '#') {
            continue;
        }
        const auto cells = split_commas(view);
        values.assign(cells.size(), 0.0);
        bool numeric = true;
        std::size_t bad = 0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (!parse_double(cells[i], values[i])) {
                numeric = false;
                bad = i;
                break;
            }
        }
        if (first_content && !numeric) {
            first_content = false; // header row
            continue;
        }
        first_content = false;
        if (!numeric) {
            throw DataError("line " + std::to_string(line_no) + ": cannot parse value '" + std::string(cells[bad]) +
                            "' in column " + std::to_string(bad + 1));
        }
        if (cells.size() % 2 != 0) {
            throw DataError("line " + std::to_string(line_no) + ": odd column count (" + std::to_string(cells.size()) +
                            "); expected re/im pairs");
        }
        if (cells.size() != expected) {
            throw DataError("line " + std::to_string(line_no) + ": " + std::to_string(cells.size()) +
                            " columns but metadata implies " + std::to_string(expected) + " (2 x " +
                            std::to_string(opts.subcarriers) + " subcarriers x " + std::to_string(opts.antennas) +
                            " antennas)");
        }
        for (std::size_t i = 0; i < cells.size(); i += 2) {
            samples.emplace_back(values[i], values[i + 1]);
        }
        ++frames;
    }
    if (frames == 0) {
        throw DataError("no rows");
    }
    try {
        return CsiTrial(CsiShape{frames, opts.subcarriers, opts.antennas}, opts.metadata, std::move(samples));
    } catch (const InvalidInput& e) {
        throw DataError(e.what());
    }
}

CsiTrial import_csi_csv(const std::filesystem::path& path, const CsvImportOptions& opts) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    try {
        return import_csi_csv(in, opts);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_doppler(const std::filesystem::path& path, const DopplerMatrix& m) {
    detail::ByteWriter w;
    w.magic("DORFVR01");
    w.u32(checked_u32(m.windows(), "T'"));
    w.u32(checked_u32(m.columns(), "N"));
    w.f64(m.lambda_m);
    for (Eigen::Index s = 0; s < m.v_r.rows(); ++s) {
        for (Eigen::Index i = 0; i < m.v_r.cols(); ++i) {
            w.f32(static_cast<float>(m.v_r(s, i)));
        }
    }
    w.save(path);
}

DopplerMatrix read_doppler(const std::filesystem::path& path) {
    auto r = detail::ByteReader::from_file(path);
    r.expect_magic("DORFVR01");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    DopplerMatrix m;
    m.lambda_m = r.f64();
    r.need(std::size_t{rows} * cols * 4);
    m.v_r.resize(rows, cols);
    for (Eigen::Index s = 0; s < rows; ++s) {
        for (Eigen::Index i = 0; i < cols; ++i) {
            m.v_r(s, i) = r.f32();
        }
    }
    r.expect_end();
    // Window times and provenance are not part of the container.
    m.window_times.resize(rows);
    std::iota(m.window_times.begin(), m.window_times.end(), 0.0);
    m.column_antenna.assign(cols, 0);
    m.column_bin.resize(cols);
    std::iota(m.column_bin.begin(), m.column_bin.end(), std::uint32_t{0});
    return m;
}

void write_doppler_csv(const std::filesystem::path& path, const DopplerMatrix& m) {
    std::ostringstream out;
    out << "time_s";
    for (std::size_t c = 0; c < m.columns(); ++c) {
        const unsigned a = c < m.column_antenna.size() ? m.column_antenna[c] : 0;
        const unsigned b = c < m.column_bin.size() ? m.column_bin[c] : static_cast<unsigned>(c);
        out << ",a" << a << "_bin" << b;
    }
    out << '\n';
    for (std::size_t s = 0; s < m.windows(); ++s) {
        out << num(s < m.window_times.size() ? m.window_times[s] : static_cast<double>(s));
        for (std::size_t c = 0; c < m.columns(); ++c) {
            out << ',' << num(m.v_r(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)));
        }
        out << '\n';
    }
    write_text(path, out.str());
}

void write_factorization(const std::filesystem::path& path, const VelocityTrack& v, const DirectionSet& r) {
    if (v.v.cols() != 3 || r.r.cols() != 3) {
        throw InvalidInput("write_factorization: factors must have 3 columns");
    }
    detail::ByteWriter w;
    w.magic("DORFVF01");
    w.u32(checked_u32(v.steps(), "T'"));
    w.u32(checked_u32(r.size(), "N"));
    for (Eigen::Index s = 0; s < v.v.rows(); ++s) {
        for (int k = 0; k < 3; ++k) {
            w.f32(static_cast<float>(v.v(s, k)));
        }
    }
    for (Eigen::Index i = 0; i < r.r.rows(); ++i) {
        for (int k = 0; k < 3; ++k) {
            w.f32(static_cast<float>(r.r(i, k)));
        }
    }
    w.save(path);
}

std::pair<VelocityTrack, DirectionSet> read_factorization(const std::filesystem::path& path) {
    auto rd = detail::ByteReader::from_file(path);
    rd.expect_magic("DORFVF01");
    const std::uint32_t steps = rd.u32();
    const std::uint32_t n = rd.u32();
    rd.need((std::size_t{steps} + n) * 3 * 4);
    VelocityTrack v;
    v.v.resize(steps, 3);
    for (Eigen::Index s = 0; s < steps; ++s) {
        for (int k = 0; k < 3; ++k) {
            v.v(s, k) = rd.f32();
        }
    }
    DirectionSet r;
    r.r.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            r.r(i, k) = rd.f32();
        }
    }
    rd.expect_end();
    v.times.resize(steps);
    std::iota(v.times.begin(), v.times.end(), 0.0);
    return {std::move(v), std::move(r)};
}

void write_velocity_csv(const std::filesystem::path& path, const VelocityTrack& v) {
    std::ostringstream out;
    out << "time_s,vx,vy,vz\n";
    for (Eigen::Index s = 0; s < v.v.rows(); ++s) {
        const auto si = static_cast<std::size_t>(s);
        out << num(si < v.times.size() ? v.times[si] : static_cast<double>(s)) << ',' << num(v.v(s, 0)) << ','
            << num(v.v(s, 1)) << ',' << num(v.v(s, 2)) << '\n';
    }
    write_text(path, out.str());
}

void write_directions_csv(const std::filesystem::path& path, const DirectionSet& r) {
    std::ostringstream out;
    out << "index,rx,ry,rz\n";
    for (Eigen::Index i = 0; i < r.r.rows(); ++i) {
        out << i << ',' << num(r.r(i, 0)) << ',' << num(r.r(i, 1)) << ',' << num(r.r(i, 2)) << '\n';
    }
    write_text(path, out.str());
}

void write_dorf(const std::filesystem::path& path, const MergedDoRF& field) {
    const std::size_t per = 2 * field.m_rows * field.m_rows;
    if (per == 0 || field.channel_count() % per != 0) {
        throw InvalidInput("write_dorf: channel count is not a whole number of grids");
    }
    detail::ByteWriter w;
    w.magic("DORFPF01");
    w.u32(checked_u32(field.steps(), "T'"));
    w.u32(checked_u32(field.m_rows, "M"));
    w.u32(checked_u32(field.channel_count() / per, "antennas"));
    for (Eigen::Index s = 0; s < field.x.rows(); ++s) {
        for (Eigen::Index c = 0; c < field.x.cols(); ++c) {
            w.f32(static_cast<float>(field.x(s, c)));
        }
    }
    w.save(path);
}

MergedDoRF read_dorf(const std::filesystem::path& path) {
    auto r = detail::ByteReader::from_file(path);
    r.expect_magic("DORFPF01");
    const std::uint32_t steps = r.u32();
    const std::uint32_t m_rows = r.u32();
    const std::uint32_t antennas = r.u32();
    if (m_rows == 0 || antennas == 0) {
        throw DataError(path.string() + ": DoRF header has M = 0 or no antennas");
    }
    const std::size_t per = 2 * std::size_t{m_rows} * m_rows;
    const std::size_t channels = per * antennas;
    r.need(std::size_t{steps} * channels * 4);
    MergedDoRF out;
    out.m_rows = m_rows;
    out.x.resize(steps, static_cast<Eigen::Index>(channels));
    for (Eigen::Index s = 0; s < steps; ++s) {
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(channels); ++c) {
            out.x(s, c) = r.f32();
        }
    }
    r.expect_end();
    for (std::uint32_t a = 0; a < antennas; ++a) {
        for (std::size_t k = 0; k < per; ++k) {
            out.channels.push_back({a, static_cast<std::uint32_t>(k / (2 * m_rows)),
                                    static_cast<std::uint32_t>(k % (2 * m_rows))});
        }
    }
    return out;
}

void write_dorf_csv(const std::filesystem::path& path, const MergedDoRF& field) {
    std::ostringstream out;
    out << "step";
    for (const ChannelTag& t : field.channels) {
        out << ",a" << t.antenna << "_m" << t.m << "_n" << t.n;
    }
    out << '\n';
    for (Eigen::Index s = 0; s < field.x.rows(); ++s) {
        out << s;
        for (Eigen::Index c = 0; c < field.x.cols(); ++c) {
            out << ',' << num(field.x(s, c));
        }
        out << '\n';
    }
    write_text(path, out.str());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace dorf
