#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "medseg/errors.hpp"

namespace medseg {

// Byte-stable number formatting for metric streams and reports (iostream
// formatting is locale-sensitive).
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

// Append-only sink for training metric rows.
class MetricsSink {
public:
    virtual ~MetricsSink() = default;
    virtual void append(const std::string& line) = 0;
};

class FileMetricsSink : public MetricsSink {
public:
    explicit FileMetricsSink(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw FormatError("cannot open metrics file: " + path.string());
    }
    void append(const std::string& line) override { out_ << line << "\n"; }

private:
    std::ofstream out_;
};

class MemoryMetricsSink : public MetricsSink {
public:
    void append(const std::string& line) override { lines.push_back(line); }
    std::vector<std::string> lines;
};

}  // namespace medseg
