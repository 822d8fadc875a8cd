#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ptdp::io {

/// A file that cannot be opened, read or written.
class file_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw file_error("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw file_error("error while reading '" + path + "'");
    return std::move(buf).str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw file_error("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw file_error("error while writing '" + path + "'");
}

}  // namespace ptdp::io
