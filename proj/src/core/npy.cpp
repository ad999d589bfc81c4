#include "core/npy.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"

namespace mrct::npy {

namespace {

constexpr char kMagic[] = "\x93NUMPY";

std::string header_dict(const char* descr, int rows, int cols) {
    std::ostringstream os;
    os << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (" << rows << ", " << cols
       << "), }";
    return os.str();
}

void write_raw(const std::filesystem::path& path, const char* descr, const void* bytes,
               std::size_t nbytes, int rows, int cols) {
    std::string dict = header_dict(descr, rows, cols);
    // pad with spaces so that magic+version+len+dict is a multiple of 64,
    // terminated by '\n' as the format requires
    std::size_t base = 6 + 2 + 2 + dict.size() + 1;
    std::size_t pad = (64 - base % 64) % 64;
    dict.append(pad, ' ');
    dict.push_back('\n');

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io_error("cannot open for writing: " + path.string());
    f.write(kMagic, 6);
    char ver[2] = {1, 0};
    f.write(ver, 2);
    std::uint16_t hlen = static_cast<std::uint16_t>(dict.size());
    char lenb[2] = {static_cast<char>(hlen & 0xff), static_cast<char>(hlen >> 8)};
    f.write(lenb, 2);
    f.write(dict.data(), static_cast<std::streamsize>(dict.size()));
    f.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(nbytes));
    if (!f) throw_io_error("short write: " + path.string());
}

std::string read_header(std::ifstream& f, const std::filesystem::path& path) {
    char magic[6];
    char ver[2];
    char lenb[2];
    f.read(magic, 6);
    f.read(ver, 2);
    f.read(lenb, 2);
    if (!f || std::memcmp(magic, kMagic, 6) != 0)
        throw_io_error("not an NPY file: " + path.string());
    if (ver[0] != 1) throw_io_error("unsupported NPY version in " + path.string());
    std::uint16_t hlen = static_cast<std::uint8_t>(lenb[0]) | (static_cast<std::uint8_t>(lenb[1]) << 8);
    std::string dict(hlen, '\0');
    f.read(dict.data(), hlen);
    if (!f) throw_io_error("truncated NPY header: " + path.string());
    return dict;
}

void parse_shape(const std::string& dict, const std::filesystem::path& path, int& rows, int& cols) {
    if (dict.find("'fortran_order': False") == std::string::npos)
        throw_io_error("fortran-order NPY not supported: " + path.string());
    auto p = dict.find("'shape': (");
    if (p == std::string::npos) throw_io_error("bad NPY header: " + path.string());
    p += 10;
    auto q = dict.find(')', p);
    std::string shape = dict.substr(p, q - p);
    if (std::sscanf(shape.c_str(), "%d, %d", &rows, &cols) != 2 || rows <= 0 || cols <= 0)
        throw_io_error("expected 2-D NPY array in " + path.string() + ", got shape (" + shape + ")");
}

} // namespace

void write_f32(const std::filesystem::path& path, const std::vector<double>& values, int rows, int cols) {
    if (values.size() != static_cast<std::size_t>(rows) * cols)
        throw_invalid_argument("npy::write_f32: size/shape mismatch");
    std::vector<float> f32(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) f32[i] = static_cast<float>(values[i]);
    write_raw(path, "<f4", f32.data(), f32.size() * sizeof(float), rows, cols);
}

void write_u8(const std::filesystem::path& path, const std::vector<std::uint8_t>& values, int rows, int cols) {
    if (values.size() != static_cast<std::size_t>(rows) * cols)
        throw_invalid_argument("npy::write_u8: size/shape mismatch");
    write_raw(path, "|u1", values.data(), values.size(), rows, cols);
}

std::vector<double> read_f32(const std::filesystem::path& path, int& rows, int& cols) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io_error("cannot open: " + path.string());
    std::string dict = read_header(f, path);
    if (dict.find("'descr': '<f4'") == std::string::npos)
        throw_io_error("expected <f4 NPY in " + path.string());
    parse_shape(dict, path, rows, cols);
    std::vector<float> f32(static_cast<std::size_t>(rows) * cols);
    f.read(reinterpret_cast<char*>(f32.data()), static_cast<std::streamsize>(f32.size() * sizeof(float)));
    if (!f) throw_io_error("truncated NPY data: " + path.string());
    std::vector<double> out(f32.size());
    for (std::size_t i = 0; i < f32.size(); ++i) out[i] = f32[i];
    return out;
}

std::vector<std::uint8_t> read_u8(const std::filesystem::path& path, int& rows, int& cols) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io_error("cannot open: " + path.string());
    std::string dict = read_header(f, path);
    if (dict.find("'descr': '|u1'") == std::string::npos)
        throw_io_error("expected |u1 NPY in " + path.string());
    parse_shape(dict, path, rows, cols);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(rows) * cols);
    f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw_io_error("truncated NPY data: " + path.string());
    return out;
}

} // namespace mrct::npy
