#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "contracluster/array.hpp"
#include "contracluster/errors.hpp"
#include "contracluster/rng.hpp"

namespace contracluster {

// Normalized image set: pixels in [0,1], shape B x 1 x H x W.
struct Dataset {
    Array<float> images;
    std::vector<int> labels;
    std::string split_tag = "train";
    int class_count = 2;

    std::size_t size() const { return labels.size(); }

    void validate() const {
        if (images.ndim() != 4 || images.dim(0) != labels.size())
            throw consistency_error("Dataset: image/label counts disagree (" +
                                    shape_str(images.shape()) + " vs " +
                                    std::to_string(labels.size()) + " labels)");
        for (int l : labels)
            if (l < 0 || l >= class_count)
                throw consistency_error("Dataset: label " + std::to_string(l) +
                                        " outside [0, " + std::to_string(class_count) + ")");
    }
};

namespace detail {

inline std::uint32_t read_be32(std::ifstream& f, const std::string& path, const char* what) {
    std::uint8_t b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw io_error("failed to read " + std::string(what) + " from " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ofstream& f, std::uint32_t v) {
    char b[4] = {static_cast<char>((v >> 24) & 0xFF), static_cast<char>((v >> 16) & 0xFF),
                 static_cast<char>((v >> 8) & 0xFF), static_cast<char>(v & 0xFF)};
    f.write(b, 4);
}

inline int infer_class_count(const std::vector<int>& labels) {
    int max_label = 1;
    for (int l : labels) max_label = std::max(max_label, l);
    return max_label + 1;
}

} // namespace detail

// IDX pair (big-endian header, raw uint8 payload); magics 0x803 / 0x801.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        const std::string& split_tag = "train") {
    std::ifstream imgf(images_path, std::ios::binary);
    if (!imgf) throw io_error("cannot open image file " + images_path);
    std::ifstream lblf(labels_path, std::ios::binary);
    if (!lblf) throw io_error("cannot open label file " + labels_path);

    const std::uint32_t img_magic = detail::read_be32(imgf, images_path, "image magic");
    if (img_magic != 0x00000803)
        throw format_error("bad IDX image magic in " + images_path);
    const std::uint32_t count = detail::read_be32(imgf, images_path, "image count");
    const std::uint32_t rows = detail::read_be32(imgf, images_path, "rows");
    const std::uint32_t cols = detail::read_be32(imgf, images_path, "cols");

    const std::uint32_t lbl_magic = detail::read_be32(lblf, labels_path, "label magic");
    if (lbl_magic != 0x00000801)
        throw format_error("bad IDX label magic in " + labels_path);
    const std::uint32_t lbl_count = detail::read_be32(lblf, labels_path, "label count");
    if (lbl_count != count)
        throw consistency_error("IDX image/label counts disagree: " + std::to_string(count) +
                                " images vs " + std::to_string(lbl_count) + " labels");

    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(count) * rows * cols);
    if (!imgf.read(reinterpret_cast<char*>(pixels.data()),
                   static_cast<std::streamsize>(pixels.size())))
        throw io_error("truncated IDX image payload in " + images_path);
    std::vector<std::uint8_t> raw_labels(count);
    if (!lblf.read(reinterpret_cast<char*>(raw_labels.data()),
                   static_cast<std::streamsize>(raw_labels.size())))
        throw io_error("truncated IDX label payload in " + labels_path);

    Dataset ds;
    ds.split_tag = split_tag;
    ds.images = Array<float>({count, 1, rows, cols});
    for (std::size_t i = 0; i < pixels.size(); ++i)
        ds.images[i] = static_cast<float>(pixels[i]) / 255.0f;
    ds.labels.assign(raw_labels.begin(), raw_labels.end());
    ds.class_count = detail::infer_class_count(ds.labels);
    ds.validate();
    return ds;
}

// Writes the dataset back out with round(p*255) quantization.
inline void save_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
    const std::size_t count = ds.size();
    const std::size_t rows = ds.images.dim(2), cols = ds.images.dim(3);
    {
        std::ofstream f(images_path, std::ios::binary);
        if (!f) throw io_error("cannot write " + images_path);
        detail::write_be32(f, 0x00000803);
        detail::write_be32(f, static_cast<std::uint32_t>(count));
        detail::write_be32(f, static_cast<std::uint32_t>(rows));
        detail::write_be32(f, static_cast<std::uint32_t>(cols));
        for (std::size_t i = 0; i < ds.images.size(); ++i) {
            const float v = std::min(1.0f, std::max(0.0f, ds.images[i]));
            f.put(static_cast<char>(static_cast<int>(v * 255.0f + 0.5f)));
        }
    }
    {
        std::ofstream f(labels_path, std::ios::binary);
        if (!f) throw io_error("cannot write " + labels_path);
        detail::write_be32(f, 0x00000801);
        detail::write_be32(f, static_cast<std::uint32_t>(count));
        for (int l : ds.labels) f.put(static_cast<char>(l));
    }
}

namespace detail {

inline std::uint16_t le16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t le32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct ZipMember {
    std::string name;
    std::vector<std::uint8_t> bytes;
};

// Reads stored and deflated members of a ZIP archive; CRC-verified.
inline std::vector<ZipMember> read_zip(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw io_error("cannot open archive " + path);
    const std::streamsize file_size = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(file_size));
    if (!f.read(reinterpret_cast<char*>(buf.data()), file_size))
        throw io_error("cannot read archive " + path);

    // locate end-of-central-directory
    if (buf.size() < 22) throw format_error(path + " is not a ZIP archive");
    std::size_t eocd = std::string::npos;
    const std::size_t scan_limit = buf.size() >= 66000 ? buf.size() - 66000 : 0;
    for (std::size_t i = buf.size() - 22; ; --i) {
        if (le32(&buf[i]) == 0x06054b50) {
            eocd = i;
            break;
        }
        if (i == scan_limit) break;
    }
    if (eocd == std::string::npos)
        throw format_error(path + ": ZIP end-of-central-directory not found");

    const std::uint16_t entries = le16(&buf[eocd + 10]);
    std::size_t cd = le32(&buf[eocd + 16]);

    std::vector<ZipMember> members;
    for (std::uint16_t e = 0; e < entries; ++e) {
        if (cd + 46 > buf.size() || le32(&buf[cd]) != 0x02014b50)
            throw format_error(path + ": corrupt central directory");
        const std::uint16_t method = le16(&buf[cd + 10]);
        const std::uint32_t crc = le32(&buf[cd + 16]);
        const std::uint32_t comp_size = le32(&buf[cd + 20]);
        const std::uint32_t uncomp_size = le32(&buf[cd + 24]);
        const std::uint16_t name_len = le16(&buf[cd + 28]);
        const std::uint16_t extra_len = le16(&buf[cd + 30]);
        const std::uint16_t comment_len = le16(&buf[cd + 32]);
        const std::uint32_t local_off = le32(&buf[cd + 42]);
        std::string name(reinterpret_cast<const char*>(&buf[cd + 46]), name_len);
        cd += 46u + name_len + extra_len + comment_len;

        if (local_off + 30 > buf.size() || le32(&buf[local_off]) != 0x04034b50)
            throw format_error(path + ": corrupt local header for " + name);
        const std::uint16_t lname = le16(&buf[local_off + 26]);
        const std::uint16_t lextra = le16(&buf[local_off + 28]);
        const std::size_t data_off = local_off + 30u + lname + lextra;
        if (data_off + comp_size > buf.size())
            throw io_error(path + ": truncated member " + name);

        ZipMember m;
        m.name = std::move(name);
        if (method == 0) {
            m.bytes.assign(buf.begin() + data_off, buf.begin() + data_off + comp_size);
        } else if (method == 8) {
            m.bytes.resize(uncomp_size);
            z_stream zs{};
            if (inflateInit2(&zs, -15) != Z_OK)
                throw io_error("zlib init failed for " + path);
            zs.next_in = const_cast<Bytef*>(buf.data() + data_off);
            zs.avail_in = comp_size;
            zs.next_out = m.bytes.data();
            zs.avail_out = uncomp_size;
            const int rc = inflate(&zs, Z_FINISH);
            inflateEnd(&zs);
            if (rc != Z_STREAM_END)
                throw format_error(path + ": deflate stream error in member " + m.name);
        } else {
            throw format_error(path + ": unsupported compression method " +
                               std::to_string(method) + " for member " + m.name);
        }
        if (crc32(0L, m.bytes.data(), static_cast<uInt>(m.bytes.size())) != crc)
            throw format_error(path + ": CRC mismatch in member " + m.name);
        members.push_back(std::move(m));
    }
    return members;
}

struct NpyArray {
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> data;
};

// NPY v1.0, uint8, C-order only; everything else is rejected.
inline NpyArray parse_npy_u8(const std::vector<std::uint8_t>& bytes, const std::string& ctx) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0)
        throw format_error(ctx + ": not an NPY stream");
    if (bytes[6] != 1 || bytes[7] != 0)
        throw format_error(ctx + ": unsupported NPY version " + std::to_string(bytes[6]) + "." +
                           std::to_string(bytes[7]));
    const std::uint16_t header_len = le16(&bytes[8]);
    if (10u + header_len > bytes.size()) throw format_error(ctx + ": truncated NPY header");
    const std::string header(reinterpret_cast<const char*>(&bytes[10]), header_len);

    auto find_value = [&](const std::string& key) -> std::string {
        const auto kpos = header.find("'" + key + "'");
        if (kpos == std::string::npos)
            throw format_error(ctx + ": NPY header missing key " + key);
        auto p = header.find(':', kpos);
        ++p;
        while (p < header.size() && header[p] == ' ') ++p;
        return header.substr(p);
    };

    const std::string descr = find_value("descr");
    if (descr.rfind("'|u1'", 0) != 0 && descr.rfind("'<u1'", 0) != 0)
        throw format_error(ctx + ": unsupported dtype (want uint8), header: " + header);
    const std::string order = find_value("fortran_order");
    if (order.rfind("False", 0) != 0)
        throw format_error(ctx + ": fortran_order arrays are not supported");

    NpyArray out;
    std::string shape_str = find_value("shape");
    if (shape_str.empty() || shape_str[0] != '(')
        throw format_error(ctx + ": malformed NPY shape");
    std::size_t p = 1;
    while (p < shape_str.size() && shape_str[p] != ')') {
        while (p < shape_str.size() && (shape_str[p] == ' ' || shape_str[p] == ',')) ++p;
        if (p >= shape_str.size() || shape_str[p] == ')') break;
        std::size_t dim = 0;
        while (p < shape_str.size() && shape_str[p] >= '0' && shape_str[p] <= '9') {
            dim = dim * 10 + static_cast<std::size_t>(shape_str[p] - '0');
            ++p;
        }
        out.shape.push_back(dim);
    }

    std::size_t numel = 1;
    for (std::size_t d : out.shape) numel *= d;
    const std::size_t payload_off = 10u + header_len;
    if (payload_off + numel > bytes.size())
        throw io_error(ctx + ": truncated NPY payload");
    out.data.assign(bytes.begin() + payload_off, bytes.begin() + payload_off + numel);
    return out;
}

} // namespace detail

// MedMNIST-style archive: ZIP of NPY members named {split}_images / {split}_labels.
inline Dataset load_medmnist_npz(const std::string& path, const std::string& split) {
    const auto members = detail::read_zip(path);
    const std::string img_name = split + "_images.npy";
    const std::string lbl_name = split + "_labels.npy";
    const detail::ZipMember* img = nullptr;
    const detail::ZipMember* lbl = nullptr;
    for (const auto& m : members) {
        if (m.name == img_name) img = &m;
        if (m.name == lbl_name) lbl = &m;
    }
    if (!img || !lbl)
        throw format_error(path + ": missing member " + (img ? lbl_name : img_name));

    const auto imgs = detail::parse_npy_u8(img->bytes, img_name);
    const auto labels = detail::parse_npy_u8(lbl->bytes, lbl_name);

    if (imgs.shape.size() != 3 &&
        !(imgs.shape.size() == 4 && imgs.shape[3] == 1))
        throw format_error(img_name + ": want (N,H,W) grayscale images");
    const std::size_t n = imgs.shape[0], h = imgs.shape[1], w = imgs.shape[2];

    if (!(labels.shape.size() == 1 || (labels.shape.size() == 2 && labels.shape[1] == 1)))
        throw format_error(lbl_name + ": want (N,) or (N,1) labels");
    if (labels.data.size() != n)
        throw consistency_error(path + ": image/label counts disagree");

    Dataset ds;
    ds.split_tag = split;
    ds.images = Array<float>({n, 1, h, w});
    for (std::size_t i = 0; i < imgs.data.size(); ++i)
        ds.images[i] = static_cast<float>(imgs.data[i]) / 255.0f;
    ds.labels.assign(labels.data.begin(), labels.data.end());
    ds.class_count = detail::infer_class_count(ds.labels);
    ds.validate();
    return ds;
}

// Deterministic sample without replacement of round(fraction * N) items.
inline Dataset subset(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw argument_error("subset: fraction must be in (0, 1], got " +
                             std::to_string(fraction));
    const std::size_t count =
        static_cast<std::size_t>(fraction * static_cast<double>(ds.size()) + 0.5);
    if (count < 1) throw argument_error("subset: empty result");

    Rng rng(seed);
    const auto idx = rng.sample_without_replacement(ds.size(), count);

    const std::size_t h = ds.images.dim(2), w = ds.images.dim(3);
    Dataset out;
    out.split_tag = ds.split_tag;
    out.class_count = ds.class_count;
    out.images = Array<float>({count, 1, h, w});
    out.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::copy(ds.images.data() + idx[i] * h * w, ds.images.data() + (idx[i] + 1) * h * w,
                  out.images.data() + i * h * w);
        out.labels[i] = ds.labels[idx[i]];
    }
    out.validate();
    return out;
}

} // namespace contracluster
