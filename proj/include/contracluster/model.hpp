#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "contracluster/ops.hpp"
#include "contracluster/rng.hpp"

namespace contracluster {

namespace detail {
template <typename T>
Array<T> uniform_init(Shape shape, double bound, Rng& rng) {
    Array<T> a(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i)
        a[i] = static_cast<T>(rng.uniform(-bound, bound));
    return a;
}
} // namespace detail

template <typename T>
struct LinearLayer {
    Tensor<T> w, b;
    std::string id;

    LinearLayer() = default;
    LinearLayer(std::size_t out, std::size_t in, Rng rng, std::string layer_id)
        : id(std::move(layer_id)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        w = Tensor<T>::parameter(detail::uniform_init<T>({out, in}, bound, rng));
        b = Tensor<T>::parameter(detail::uniform_init<T>({out}, bound, rng));
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return ops::linear(x, w, b); }

    void collect(std::vector<Parameter<T>>& out) const {
        out.push_back({w, id, "weight"});
        out.push_back({b, id, "bias"});
    }
};

template <typename T>
struct Conv2dLayer {
    Tensor<T> w, b;
    std::size_t stride = 2, pad = 1;
    std::string id;

    Conv2dLayer() = default;
    Conv2dLayer(std::size_t cout, std::size_t cin, std::size_t k, Rng rng, std::string layer_id)
        : id(std::move(layer_id)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        w = Tensor<T>::parameter(detail::uniform_init<T>({cout, cin, k, k}, bound, rng));
        b = Tensor<T>::parameter(detail::uniform_init<T>({cout}, bound, rng));
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return ops::conv2d(x, w, b, stride, pad); }

    void collect(std::vector<Parameter<T>>& out) const {
        out.push_back({w, id, "weight"});
        out.push_back({b, id, "bias"});
    }
};

template <typename T>
struct ConvT2dLayer {
    Tensor<T> w, b;
    std::size_t stride = 2, pad = 1, output_pad = 0;
    std::string id;

    ConvT2dLayer() = default;
    ConvT2dLayer(std::size_t cin, std::size_t cout, std::size_t k, std::size_t out_pad, Rng rng,
                 std::string layer_id)
        : output_pad(out_pad), id(std::move(layer_id)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        w = Tensor<T>::parameter(detail::uniform_init<T>({cin, cout, k, k}, bound, rng));
        b = Tensor<T>::parameter(detail::uniform_init<T>({cout}, bound, rng));
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        return ops::conv2d_transpose(x, w, b, stride, pad, output_pad);
    }

    void collect(std::vector<Parameter<T>>& out) const {
        out.push_back({w, id, "weight"});
        out.push_back({b, id, "bias"});
    }
};

inline constexpr std::size_t kLatentDim = 128;
inline constexpr std::size_t kProjectionDim = 64;

// e(.): three stride-2 k=4 convs (1->32->64->128) with GELU, 2x2 average
// pooling, then a linear map into the 128-dim latent space.
// 28 -> 14 -> 7 -> 3 -> (pool) -> 1.
template <typename T>
struct Encoder {
    Conv2dLayer<T> conv1, conv2, conv3;
    LinearLayer<T> fc;

    Encoder() = default;
    explicit Encoder(Rng rng)
        : conv1(32, 1, 4, rng.split("conv1"), "encoder.conv1"),
          conv2(64, 32, 4, rng.split("conv2"), "encoder.conv2"),
          conv3(128, 64, 4, rng.split("conv3"), "encoder.conv3"),
          fc(kLatentDim, 128, rng.split("fc"), "encoder.fc") {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        if (x.shape().size() != 4 || x.shape()[1] != 1)
            throw shape_error("encoder: want (B,1,H,W), got " + shape_str(x.shape()));
        auto h = ops::gelu(conv1(x));
        h = ops::gelu(conv2(h));
        h = ops::gelu(conv3(h));
        h = ops::avgpool2d(h);
        const auto& s = h.shape();
        if (s[2] != 1 || s[3] != 1)
            throw shape_error("encoder: pooled feature map is not 1x1 for input " +
                              shape_str(x.shape()));
        h = ops::reshape(h, {s[0], s[1]});
        return fc(h);
    }

    void collect(std::vector<Parameter<T>>& out) const {
        conv1.collect(out);
        conv2.collect(out);
        conv3.collect(out);
        fc.collect(out);
    }
};

// p(.): 3-layer MLP 128 -> 128 -> 128 -> 64, GELU between layers and a
// linear last layer.
template <typename T>
struct Projector {
    LinearLayer<T> l1, l2, l3;

    Projector() = default;
    explicit Projector(Rng rng)
        : l1(128, kLatentDim, rng.split("l1"), "projector.l1"),
          l2(128, 128, rng.split("l2"), "projector.l2"),
          l3(kProjectionDim, 128, rng.split("l3"), "projector.l3") {}

    Tensor<T> operator()(const Tensor<T>& h) const {
        return l3(ops::gelu(l2(ops::gelu(l1(h)))));
    }

    void collect(std::vector<Parameter<T>>& out) const {
        l1.collect(out);
        l2.collect(out);
        l3.collect(out);
    }
};

// d(.): mirror of the encoder. Linear 128 -> 128*3*3, then transposed convs
// 128 -> 64 -> 32 -> 1 (output_pad 1,0,0) with GELU between and a sigmoid
// output so reconstructions live in (0,1). 3 -> 7 -> 14 -> 28.
template <typename T>
struct Decoder {
    LinearLayer<T> fc;
    ConvT2dLayer<T> t1, t2, t3;

    Decoder() = default;
    explicit Decoder(Rng rng)
        : fc(128 * 3 * 3, kLatentDim, rng.split("fc"), "decoder.fc"),
          t1(128, 64, 4, 1, rng.split("t1"), "decoder.t1"),
          t2(64, 32, 4, 0, rng.split("t2"), "decoder.t2"),
          t3(32, 1, 4, 0, rng.split("t3"), "decoder.t3") {}

    Tensor<T> operator()(const Tensor<T>& h) const {
        auto y = fc(h);
        y = ops::reshape(y, {h.shape()[0], 128, 3, 3});
        y = ops::gelu(t1(y));
        y = ops::gelu(t2(y));
        return ops::sigmoid(t3(y));
    }

    void collect(std::vector<Parameter<T>>& out) const {
        fc.collect(out);
        t1.collect(out);
        t2.collect(out);
        t3.collect(out);
    }
};

// Conditioning head for the second phase: concat(latent, soft assignment)
// -> linear (128+k) -> 128 feeding the decoder trunk.
template <typename T>
struct ConditioningHead {
    LinearLayer<T> mix;
    std::size_t k = 0;

    ConditioningHead() = default;
    ConditioningHead(std::size_t cluster_count, Rng rng)
        : mix(kLatentDim, kLatentDim + cluster_count, rng, "decoder.cond"), k(cluster_count) {
        if (cluster_count < 2)
            throw argument_error("conditioning head requires k >= 2, got " +
                                 std::to_string(cluster_count));
    }

    void collect(std::vector<Parameter<T>>& out) const { mix.collect(out); }
};

template <typename T>
struct ContrastiveAutoencoder {
    Encoder<T> encoder;
    Projector<T> projector;
    Decoder<T> decoder;
    ConditioningHead<T> head; // k == 0 until conditioning is attached

    ContrastiveAutoencoder() = default;
    explicit ContrastiveAutoencoder(Rng rng)
        : encoder(rng.split("encoder")),
          projector(rng.split("projector")),
          decoder(rng.split("decoder")) {}

    Tensor<T> encode(const Tensor<T>& x) const { return encoder(x); }
    Tensor<T> project(const Tensor<T>& h) const { return projector(h); }
    Tensor<T> decode(const Tensor<T>& h) const { return decoder(h); }

    void attach_conditioning(std::size_t k, Rng rng) { head = ConditioningHead<T>(k, rng); }
    bool has_conditioning() const { return head.k >= 2; }

    Tensor<T> decode_conditional(const Tensor<T>& h, const Tensor<T>& c) const {
        if (!has_conditioning())
            throw usage_error("decode_conditional: conditioning head not attached");
        if (c.shape().size() != 2 || c.shape()[0] != h.shape()[0] || c.shape()[1] != head.k)
            throw shape_error("decode_conditional: assignments must be (B," +
                              std::to_string(head.k) + "), got " + shape_str(c.shape()));
        const std::size_t b = c.shape()[0], k = head.k;
        for (std::size_t i = 0; i < b; ++i) {
            T row = T(0);
            for (std::size_t j = 0; j < k; ++j) row += c.value().at2(i, j);
            if (std::abs(static_cast<double>(row) - 1.0) > 1e-4)
                throw argument_error("decode_conditional: assignment row " + std::to_string(i) +
                                     " is off the simplex (sum " + std::to_string(row) + ")");
        }
        return decoder(head.mix(ops::concat_cols(h, c)));
    }

    std::vector<Parameter<T>> encoder_parameters() const {
        std::vector<Parameter<T>> out;
        encoder.collect(out);
        return out;
    }
    std::vector<Parameter<T>> projector_parameters() const {
        std::vector<Parameter<T>> out;
        projector.collect(out);
        return out;
    }
    // Decoder trunk plus the conditioning head once attached; the parameter
    // set optimized during fine-tuning.
    std::vector<Parameter<T>> decoder_parameters() const {
        std::vector<Parameter<T>> out;
        decoder.collect(out);
        if (has_conditioning()) head.collect(out);
        return out;
    }
    std::vector<Parameter<T>> parameters() const {
        std::vector<Parameter<T>> out;
        encoder.collect(out);
        projector.collect(out);
        decoder.collect(out);
        if (has_conditioning()) head.collect(out);
        return out;
    }
};

} // namespace contracluster
