#include "vsr/tensor_io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace vsr {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_rten(const std::string& path, const Tensor& t) {
    std::string out;
    out.reserve(8 + 4 * t.shape().size() + 4 * t.numel());
    out += "RTEN";
    put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values()) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
    write_file_atomic(path, out);
}

Tensor load_rten(const std::string& path) {
    const std::string raw = read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    if (raw.size() < 8 || std::memcmp(p, "RTEN", 4) != 0)
        throw IoError("not an RTEN file: " + path);
    const std::uint32_t rank = get_u32(p + 4);
    if (rank > 8) throw IoError("implausible RTEN rank in " + path);
    if (raw.size() < 8 + 4ull * rank) throw IoError("truncated RTEN header in " + path);
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<int>(get_u32(p + 8 + 4 * i));
        if (shape[i] <= 0) throw IoError("non-positive RTEN extent in " + path);
        numel *= static_cast<std::size_t>(shape[i]);
    }
    const std::size_t payload = 8 + 4ull * rank;
    if (raw.size() != payload + 4 * numel)
        throw IoError("RTEN payload size mismatch in " + path);
    std::vector<double> values(numel);
    for (std::size_t i = 0; i < numel; ++i) {
        const std::uint32_t bits = get_u32(p + payload + 4 * i);
        float f;
        std::memcpy(&f, &bits, 4);
        values[i] = static_cast<double>(f);
    }
    return Tensor::from_data(shape, std::move(values));
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("rename failed: " + tmp + " -> " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path);
    return content;
}

}  // namespace vsr
