#include "post/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "post/kernels.hpp"

namespace post {

using json = nlohmann::json;

namespace {

std::string dir_of(const std::string& path) {
    const std::size_t cut = path.find_last_of('/');
    return cut == std::string::npos ? std::string(".") : path.substr(0, cut);
}

std::string resolve(const std::string& base_dir, const std::string& rel) {
    if (rel.empty() || rel.front() == '/') return rel;
    return base_dir + "/" + rel;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool parse_cell(const std::string& cell, double& out) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    return *end == '\0';
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("manifest: cannot open " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw DataError("manifest: invalid json in " + path + ": " + e.what());
    }
    static const char* known[] = {"name",  "channels", "window",        "val_fraction",
                                  "train", "test",     "labels",        "channel_labels"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw DataError("manifest: unknown key \"" + it.key() + "\" in " + path);
    }
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.channels = j.at("channels").get<std::size_t>();
        m.window = j.at("window").get<std::size_t>();
        if (j.contains("val_fraction")) m.val_fraction = j.at("val_fraction").get<double>();
        const std::string base = dir_of(path);
        m.train = resolve(base, j.at("train").get<std::string>());
        m.test = resolve(base, j.at("test").get<std::string>());
        if (j.contains("labels")) m.labels = resolve(base, j.at("labels").get<std::string>());
        if (j.contains("channel_labels"))
            m.channel_labels = resolve(base, j.at("channel_labels").get<std::string>());
    } catch (const json::exception& e) {
        throw DataError("manifest: missing or mistyped key in " + path + ": " + e.what());
    }
    if (m.channels == 0) throw DataError("manifest: channel count must be positive");
    if (m.window == 0) throw DataError("manifest: window length must be positive");
    if (!(m.val_fraction >= 0.0 && m.val_fraction < 1.0))
        throw DataError("manifest: val_fraction must lie in [0, 1)");
    return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    json j{{"name", m.name},       {"channels", m.channels}, {"window", m.window},
           {"val_fraction", m.val_fraction}, {"train", m.train},  {"test", m.test}};
    if (!m.labels.empty()) j["labels"] = m.labels;
    if (!m.channel_labels.empty()) j["channel_labels"] = m.channel_labels;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("manifest: cannot write " + path);
    f << j.dump(2) << "\n";
}

Matrix load_csv_matrix(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("csv: cannot open " + path);
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::string line;
    std::size_t lineno = 0;
    bool first_data_line = true;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_commas(line);
        std::vector<double> row(cells.size());
        bool numeric = true;
        for (std::size_t c = 0; c < cells.size(); ++c)
            if (!parse_cell(cells[c], row[c])) {
                numeric = false;
                if (!first_data_line)
                    throw DataError("csv: non-numeric cell at " + path + ":" +
                                    std::to_string(lineno) + " column " + std::to_string(c + 1));
                break;
            }
        if (!numeric) {  // header line
            first_data_line = false;
            continue;
        }
        if (rows == 0) {
            cols = row.size();
        } else if (row.size() != cols) {
            throw DataError("csv: ragged row at " + path + ":" + std::to_string(lineno) +
                            " (expected " + std::to_string(cols) + " cells, found " +
                            std::to_string(row.size()) + ")");
        }
        values.insert(values.end(), row.begin(), row.end());
        ++rows;
        first_data_line = false;
    }
    if (rows == 0) throw DataError("csv: no data rows in " + path);
    Matrix m(rows, cols);
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

void save_csv_matrix(const std::string& path, const Matrix& m) {
    if (m.size() == 0) throw DataError("csv: refusing to write an empty matrix");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("csv: cannot write " + path);
    char buf[64];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::string line;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            if (j) line.push_back(',');
            line += buf;
        }
        f << line << "\n";
    }
    if (!f) throw DataError("csv: write failed: " + path);
}

namespace {
constexpr char kMatMagic[4] = {'P', 'M', 'A', 'T'};
constexpr std::uint32_t kMatVersion = 1;
}  // namespace

Matrix load_bin_matrix(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("bin: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMatMagic, 4) != 0)
        throw DataError("bin: bad magic (not a matrix file): " + path);
    std::uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (!f || ver != kMatVersion) throw DataError("bin: unsupported version in " + path);
    std::uint64_t rows = 0, cols = 0;
    f.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    f.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!f || rows == 0 || cols == 0 || rows * cols > (1ull << 32))
        throw DataError("bin: corrupt shape header in " + path);
    Matrix m(rows, cols);
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!f) throw DataError("bin: truncated payload in " + path);
    return m;
}

void save_bin_matrix(const std::string& path, const Matrix& m) {
    if (m.size() == 0) throw DataError("bin: refusing to write an empty matrix");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("bin: cannot write " + path);
    f.write(kMatMagic, 4);
    f.write(reinterpret_cast<const char*>(&kMatVersion), sizeof(kMatVersion));
    const std::uint64_t rows = m.rows(), cols = m.cols();
    f.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    f.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    f.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!f) throw DataError("bin: write failed: " + path);
}

Matrix load_matrix(const std::string& path) {
    if (ends_with(path, ".csv")) return load_csv_matrix(path);
    if (ends_with(path, ".bin")) return load_bin_matrix(path);
    throw DataError("load_matrix: unsupported extension (expect .csv or .bin): " + path);
}

void save_matrix(const std::string& path, const Matrix& m) {
    if (ends_with(path, ".csv")) return save_csv_matrix(path, m);
    if (ends_with(path, ".bin")) return save_bin_matrix(path, m);
    throw DataError("save_matrix: unsupported extension (expect .csv or .bin): " + path);
}

std::vector<int> load_labels_vector(const std::string& path) {
    const Matrix m = load_matrix(path);
    if (m.cols() != 1)
        throw DataError("labels: expected a single column in " + path + ", found " +
                        std::to_string(m.cols()));
    std::vector<int> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double v = m(i, 0);
        if (v != 0.0 && v != 1.0)
            throw DataError("labels: non-binary value at row " + std::to_string(i + 1) + " of " +
                            path);
        out[i] = static_cast<int>(v);
    }
    return out;
}

Matrix load_labels_matrix(const std::string& path) {
    Matrix m = load_matrix(path);
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m.data()[i] != 0.0 && m.data()[i] != 1.0)
            throw DataError("labels: non-binary value in " + path);
    return m;
}

NormStats compute_norm_stats(const Matrix& train_series) {
    if (train_series.rows() == 0) throw DataError("normalize: empty training series");
    const std::size_t t = train_series.rows(), d0 = train_series.cols();
    NormStats s;
    s.mean = Matrix(1, d0);
    s.std = Matrix(1, d0);
    for (std::size_t j = 0; j < d0; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < t; ++i) acc += train_series(i, j);
        s.mean(0, j) = acc / static_cast<double>(t);
        double sq = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
            const double d = train_series(i, j) - s.mean(0, j);
            sq += d * d;
        }
        s.std(0, j) = std::max(kernels::kEpsFloor, std::sqrt(sq / static_cast<double>(t)));
    }
    s.from_train = true;
    return s;
}

Matrix normalize(const Matrix& series, const NormStats& stats) {
    if (!stats.from_train)
        throw UsageError("normalize: statistics must be computed on the training split");
    if (series.cols() != stats.mean.cols())
        throw DataError("normalize: channel count mismatch between series and statistics");
    Matrix out(series.rows(), series.cols());
    for (std::size_t i = 0; i < series.rows(); ++i)
        for (std::size_t j = 0; j < series.cols(); ++j)
            out(i, j) = (series(i, j) - stats.mean(0, j)) / stats.std(0, j);
    return out;
}

WindowSet make_windows(const Matrix& series, std::size_t n) {
    if (n == 0) throw UsageError("make_windows: window length must be positive");
    if (series.rows() < n)
        throw DataError("make_windows: series of " + std::to_string(series.rows()) +
                        " rows is shorter than the window length " + std::to_string(n));
    WindowSet ws;
    const std::size_t count = series.rows() / n;
    for (std::size_t w = 0; w < count; ++w) {
        Matrix win(n, series.cols());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < series.cols(); ++j) win(i, j) = series(w * n + i, j);
        ws.windows.push_back(std::move(win));
        ws.starts.push_back(w * n);
    }
    ws.dropped_tail = series.rows() - count * n;
    return ws;
}

Matrix unwindow(const WindowSet& ws, std::size_t d0) {
    if (ws.windows.empty()) throw DataError("unwindow: empty window set");
    std::size_t rows = 0;
    for (const Matrix& w : ws.windows) {
        if (w.cols() != d0) throw DataError("unwindow: channel count mismatch");
        rows += w.rows();
    }
    Matrix out(rows, d0);
    for (std::size_t w = 0; w < ws.windows.size(); ++w) {
        const Matrix& win = ws.windows[w];
        for (std::size_t i = 0; i < win.rows(); ++i)
            for (std::size_t j = 0; j < d0; ++j) out(ws.starts[w] + i, j) = win(i, j);
    }
    return out;
}

SeriesSplit split_tail(const Matrix& series, double fraction) {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw UsageError("split_tail: fraction must lie in [0, 1)");
    const std::size_t tail_rows =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(series.rows())));
    const std::size_t head_rows = series.rows() - tail_rows;
    if (head_rows == 0) throw DataError("split_tail: split leaves an empty training head");
    SeriesSplit s;
    s.head = Matrix(head_rows, series.cols());
    for (std::size_t i = 0; i < head_rows; ++i)
        for (std::size_t j = 0; j < series.cols(); ++j) s.head(i, j) = series(i, j);
    if (tail_rows) {
        s.tail = Matrix(tail_rows, series.cols());
        for (std::size_t i = 0; i < tail_rows; ++i)
            for (std::size_t j = 0; j < series.cols(); ++j)
                s.tail(i, j) = series(head_rows + i, j);
    }
    return s;
}

}  // namespace post
