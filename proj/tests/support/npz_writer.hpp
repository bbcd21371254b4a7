#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

// Minimal independent NPZ writer (stored members only), used to build test
// archives without touching the library's reader.
namespace testsupport {

inline std::vector<std::uint8_t> npy_bytes_u8(const std::vector<std::size_t>& shape,
                                              const std::vector<std::uint8_t>& data) {
    std::string header = "{'descr': '|u1', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        header += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size()) header += ",";
        if (i + 1 < shape.size()) header += " ";
    }
    header += "), }";
    // pad with spaces so that magic+version+len+header is a multiple of 64
    std::size_t unpadded = 6 + 2 + 2 + header.size() + 1;
    std::size_t padded = ((unpadded + 63) / 64) * 64;
    header.append(padded - unpadded, ' ');
    header += '\n';

    std::vector<std::uint8_t> out;
    const char magic[] = "\x93NUMPY";
    out.insert(out.end(), magic, magic + 6);
    out.push_back(1);
    out.push_back(0);
    out.push_back(static_cast<std::uint8_t>(header.size() & 0xFF));
    out.push_back(static_cast<std::uint8_t>((header.size() >> 8) & 0xFF));
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), data.begin(), data.end());
    return out;
}

struct NpzMember {
    std::string name; // without .npy suffix
    std::vector<std::uint8_t> npy;
};

inline void write_npz_stored(const std::string& path, const std::vector<NpzMember>& members) {
    std::ofstream f(path, std::ios::binary);
    auto put16 = [&](std::uint16_t v) {
        char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
        f.write(b, 2);
    };
    auto put32 = [&](std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        f.write(b, 4);
    };

    struct Central {
        std::string name;
        std::uint32_t crc, size, offset;
    };
    std::vector<Central> centrals;

    for (const auto& m : members) {
        const std::string fname = m.name + ".npy";
        const std::uint32_t crc =
            crc32(0L, m.npy.data(), static_cast<uInt>(m.npy.size()));
        const std::uint32_t offset = static_cast<std::uint32_t>(f.tellp());
        put32(0x04034b50);
        put16(20);      // version needed
        put16(0);       // flags
        put16(0);       // stored
        put16(0);       // mod time
        put16(0);       // mod date
        put32(crc);
        put32(static_cast<std::uint32_t>(m.npy.size()));
        put32(static_cast<std::uint32_t>(m.npy.size()));
        put16(static_cast<std::uint16_t>(fname.size()));
        put16(0); // extra len
        f.write(fname.data(), static_cast<std::streamsize>(fname.size()));
        f.write(reinterpret_cast<const char*>(m.npy.data()),
                static_cast<std::streamsize>(m.npy.size()));
        centrals.push_back({fname, crc, static_cast<std::uint32_t>(m.npy.size()), offset});
    }

    const std::uint32_t cd_start = static_cast<std::uint32_t>(f.tellp());
    for (const auto& c : centrals) {
        put32(0x02014b50);
        put16(20);
        put16(20);
        put16(0);
        put16(0); // stored
        put16(0);
        put16(0);
        put32(c.crc);
        put32(c.size);
        put32(c.size);
        put16(static_cast<std::uint16_t>(c.name.size()));
        put16(0);
        put16(0);
        put16(0);
        put16(0);
        put32(0);
        put32(c.offset);
        f.write(c.name.data(), static_cast<std::streamsize>(c.name.size()));
    }
    const std::uint32_t cd_end = static_cast<std::uint32_t>(f.tellp());

    put32(0x06054b50);
    put16(0);
    put16(0);
    put16(static_cast<std::uint16_t>(centrals.size()));
    put16(static_cast<std::uint16_t>(centrals.size()));
    put32(cd_end - cd_start);
    put32(cd_start);
    put16(0);
}

} // namespace testsupport
