#pragma once

// Toy diffusion transformer: dual-stream MM-DiT blocks with joint attention,
// followed by single-stream blocks with parallel attention + MLP, all
// modulated by (timestep + guidance + pooled text). Image tokens carry 2-D
// rotary coordinates on the packed grid of the whole side-by-side canvas;
// text tokens sit at (0, 0).
//
// Parameter names:
//   img_in, txt_in, vector_in                        input projections
//   time_in.fc{1,2}, guidance_in.fc{1,2}             conditioning MLPs
//   mmdit.<i>.{img_mod,txt_mod}                      adaptive-norm modulation (6*d)
//   mmdit.<i>.attn.{q,k,v,o}                         image-stream attention
//   mmdit.<i>.attn.txt_{q,k,v,o}                     text-stream attention
//   mmdit.<i>.{img_mlp,txt_mlp}.fc{1,2}
//   single.<i>.mod                                   modulation (3*d)
//   single.<i>.attn.{q,k,v,o}
//   single.<i>.mlp.fc{1,2}
//   final.mod, final.head
// each with .weight and .bias.

#include <string>
#include <utility>
#include <vector>

#include "tryon/dit/config.hpp"
#include "tryon/nn/ops.hpp"

namespace tryon::dit {

using nn::Linear;
using nn::Mat;
using nn::RowVec;

using Positions = std::vector<std::pair<int, int>>;

template <class T>
struct DitInput {
    Mat<T> image_tokens;  // N x token_dim_in
    Positions positions;  // N (row, col) on the packed canvas grid
    Mat<T> text;          // L x d_text, L may be 0
    RowVec<T> pooled;     // d_text
    double t = 0.0;
    double guidance = 0.0;
};

/// Row/col coordinates of every token of a packed grid, row-major.
inline Positions grid_positions(int rows, int cols) {
    Positions p;
    p.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) p.emplace_back(r, c);
    return p;
}

namespace detail {

template <class T>
RowVec<T> chunk(const Mat<T>& m, int i, int d) {
    return m.row(0).segment(static_cast<Eigen::Index>(i) * d, d);
}

template <class T>
Mat<T> scale_cols(const Mat<T>& x, const RowVec<T>& g) {
    return x.array().rowwise() * g.array();
}

}  // namespace detail

struct MMDiTLayers {
    Linear img_mod, txt_mod;
    Linear q, k, v, o;
    Linear tq, tk, tv, to;
    Linear img_fc1, img_fc2, txt_fc1, txt_fc2;
};

struct SingleLayers {
    Linear mod, q, k, v, o, fc1, fc2;
};

/// Per-stream activations saved by an MM-DiT block.
template <class T>
struct StreamCache {
    Mat<T> mod;  // 1 x 6d
    nn::LayerNormCache<T> ln1, ln2;
    Mat<T> n1, attn, o_out, x_mid, n2, h1, g, mlp_out;
};

template <class T>
struct MMDiTCache {
    StreamCache<T> img, txt;
    nn::AttentionCache<T> attn;
    int text_len = 0;
};

template <class T>
struct SingleCache {
    Mat<T> mod;  // 1 x 3d
    nn::LayerNormCache<T> ln;
    Mat<T> n, attn, o_out, h1, g, mlp_out;
    nn::AttentionCache<T> attn_cache;
};

template <class T>
struct ForwardCache {
    Mat<T> image_tokens, text, pooled;
    Mat<T> time_feat, time_h, guid_feat, guid_h;  // pre-activation hidden of the cond MLPs
    Mat<T> cond, sc;                              // cond and silu(cond)
    Mat<T> img0, txt0;
    std::vector<MMDiTCache<T>> mm;
    std::vector<SingleCache<T>> single;
    Mat<T> final_mod;
    nn::LayerNormCache<T> final_ln;
    Mat<T> final_n;
    nn::RopeTable<T> rope_joint;
    int text_len = 0;
};

template <class T>
class DiT {
public:
    DiT() = default;

    /// Builds the parameter layout and initializes it from cfg.seed.
    explicit DiT(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        build_layout();
        initialize();
    }

    /// Layout only; parameters are zero until assigned.
    static DiT uninitialized(const ModelConfig& cfg) {
        DiT m;
        m.cfg_ = cfg;
        m.cfg_.validate();
        m.build_layout();
        return m;
    }

    const ModelConfig& config() const noexcept { return cfg_; }
    nn::ParamStore<T>& params() noexcept { return params_; }
    const nn::ParamStore<T>& params() const noexcept { return params_; }

    template <class U>
    DiT<U> cast() const {
        DiT<U> out = DiT<U>::uninitialized(cfg_);
        out.params() = params_.template cast<U>();
        return out;
    }

    // ------------------------------------------------------------ conditioning

    RowVec<T> timestep_embedding(double t) const {
        require<ValueError>(t >= 0.0 && t <= 1.0, "timestep ", t, " outside [0, 1]");
        return embed_scalar(t, time_fc1_, time_fc2_);
    }

    RowVec<T> guidance_embedding(double g) const {
        require<ValueError>(g >= 0.0, "guidance ", g, " must be non-negative");
        return embed_scalar(g, guid_fc1_, guid_fc2_);
    }

    RowVec<T> pooled_projection(const RowVec<T>& pooled) const {
        require(pooled.size() == cfg_.d_text, "pooled text has ", pooled.size(), " dims, expected ", cfg_.d_text);
        return vector_in_.forward(params_, Mat<T>(pooled)).row(0);
    }

    RowVec<T> conditioning(double t, double g, const RowVec<T>& pooled) const {
        return timestep_embedding(t) + guidance_embedding(g) + pooled_projection(pooled);
    }

    // ------------------------------------------------------------ blocks

    /// One MM-DiT block on hidden streams (img: N x d, txt: L x d). positions are the image
    /// token coordinates; text tokens use (0, 0).
    std::pair<Mat<T>, Mat<T>> mmdit_block(int index, const Mat<T>& img, const Mat<T>& txt, const RowVec<T>& cond,
                                          const Positions& positions) const {
        check_block_inputs(img, positions);
        require(txt.rows() == 0 || txt.cols() == cfg_.d_model, "mmdit_block: text dim ", txt.cols());
        const auto rope = joint_rope(static_cast<int>(txt.rows()), positions);
        MMDiTCache<T> cache;
        Mat<T> sc = nn::silu(Mat<T>(cond));
        Mat<T> x = img, y = txt;
        mmdit_forward(mm_.at(static_cast<std::size_t>(index)), x, y, sc, rope, cache);
        return {std::move(x), std::move(y)};
    }

    /// One single-stream block on the merged [txt; img] sequence. text_len rows lead.
    Mat<T> singledit_block(int index, const Mat<T>& tokens, const RowVec<T>& cond, int text_len,
                           const Positions& positions, bool include_mlp = true) const {
        require(tokens.cols() == cfg_.d_model, "singledit_block: token dim ", tokens.cols(), " != ", cfg_.d_model);
        require(tokens.rows() == text_len + static_cast<Eigen::Index>(positions.size()),
                "singledit_block: ", tokens.rows(), " tokens vs ", text_len, " text + ", positions.size(),
                " positions");
        const auto rope = joint_rope(text_len, positions);
        SingleCache<T> cache;
        Mat<T> sc = nn::silu(Mat<T>(cond));
        Mat<T> x = tokens;
        single_forward(single_.at(static_cast<std::size_t>(index)), x, sc, rope, cache, include_mlp);
        return x;
    }

    // ------------------------------------------------------------ full model

    Mat<T> forward(const DitInput<T>& in) const {
        ForwardCache<T> cache;
        return forward(in, cache);
    }

    /// Velocity tokens (N x out_dim).
    Mat<T> forward(const DitInput<T>& in, ForwardCache<T>& c) const {
        require(in.image_tokens.cols() == cfg_.token_dim_in, "forward: token dim ", in.image_tokens.cols(),
                " != model token_dim_in ", cfg_.token_dim_in);
        require(static_cast<std::size_t>(in.image_tokens.rows()) == in.positions.size(), "forward: ",
                in.image_tokens.rows(), " tokens but ", in.positions.size(), " positions");
        require(in.text.rows() == 0 || in.text.cols() == cfg_.d_text, "forward: text dim ", in.text.cols(),
                " != d_text ", cfg_.d_text);
        require(in.pooled.size() == cfg_.d_text, "forward: pooled dim ", in.pooled.size());
        require<ValueError>(in.t >= 0.0 && in.t <= 1.0, "timestep ", in.t, " outside [0, 1]");
        require<ValueError>(in.guidance >= 0.0, "guidance ", in.guidance, " must be non-negative");

        const int L = static_cast<int>(in.text.rows());
        c.text_len = L;
        c.image_tokens = in.image_tokens;
        c.text = in.text;
        c.pooled = in.pooled;

        // conditioning vector
        c.time_feat = nn::sinusoidal<T>(in.t, cfg_.d_model);
        c.time_h = time_fc1_.forward(params_, c.time_feat);
        c.guid_feat = nn::sinusoidal<T>(in.guidance, cfg_.d_model);
        c.guid_h = guid_fc1_.forward(params_, c.guid_feat);
        c.cond = time_fc2_.forward(params_, nn::silu(c.time_h)) + guid_fc2_.forward(params_, nn::silu(c.guid_h)) +
                 vector_in_.forward(params_, c.pooled);
        c.sc = nn::silu(c.cond);

        c.rope_joint = joint_rope(L, in.positions);

        Mat<T> img = img_in_.forward(params_, in.image_tokens);
        Mat<T> txt = L > 0 ? txt_in_.forward(params_, in.text) : Mat<T>(0, cfg_.d_model);
        c.img0 = img;
        c.txt0 = txt;

        c.mm.resize(mm_.size());
        for (std::size_t b = 0; b < mm_.size(); ++b) mmdit_forward(mm_[b], img, txt, c.sc, c.rope_joint, c.mm[b]);

        Mat<T> x(L + img.rows(), cfg_.d_model);
        x.topRows(L) = txt;
        x.bottomRows(img.rows()) = img;

        c.single.resize(single_.size());
        for (std::size_t b = 0; b < single_.size(); ++b)
            single_forward(single_[b], x, c.sc, c.rope_joint, c.single[b], true);

        const int d = cfg_.d_model;
        c.final_mod = final_mod_.forward(params_, c.sc);
        Mat<T> img_out = x.bottomRows(x.rows() - L);
        nn::layer_norm(img_out, c.final_ln);
        c.final_n = nn::modulate(c.final_ln.xhat, detail::chunk(c.final_mod, 0, d), detail::chunk(c.final_mod, 1, d));
        return head_.forward(params_, c.final_n);
    }

    /// Backpropagates dout (N x out_dim) into grads. Only parameters flagged in
    /// `trainable` (indexed like params()) receive gradient; the pass stops as
    /// early as the flags allow.
    void backward(const ForwardCache<T>& c, const Mat<T>& dout, nn::ParamStore<T>& grads,
                  const std::vector<char>& trainable) const {
        require(static_cast<int>(trainable.size()) == params_.size(), "backward: trainable mask size");
        const int d = cfg_.d_model;
        const int L = c.text_len;
        auto g_of = [&](const Linear& l) -> nn::ParamStore<T>* { return trainable[l.weight] ? &grads : nullptr; };

        const bool cond_grad = any_trainable(trainable, cond_ids_);
        const bool below_single = cond_grad || any_trainable(trainable, mm_ids_) || any_trainable(trainable, in_ids_);
        Mat<T> dsc = Mat<T>::Zero(1, d);

        // final layer
        Mat<T> dn = head_.backward(params_, c.final_n, dout, g_of(head_), true);
        const RowVec<T> fshift = detail::chunk(c.final_mod, 0, d), fscale = detail::chunk(c.final_mod, 1, d);
        Mat<T> dfmod(1, 2 * d);
        dfmod.row(0).segment(0, d) = dn.colwise().sum();
        dfmod.row(0).segment(d, d) = (dn.array() * c.final_ln.xhat.array()).colwise().sum();
        if (auto* g = g_of(final_mod_); g || cond_grad) {
            Mat<T> ds = final_mod_.backward(params_, c.sc, dfmod, g, cond_grad);
            if (cond_grad) dsc += ds;
        }
        Mat<T> dimg = nn::layer_norm_backward(c.final_ln, detail::scale_cols<T>(dn, (fscale.array() + T(1)).matrix()));

        Mat<T> dx = Mat<T>::Zero(L + dimg.rows(), d);
        dx.bottomRows(dimg.rows()) = dimg;

        for (std::size_t b = single_.size(); b-- > 0;) {
            const bool want_input = b > 0 || below_single;
            dx = single_backward(single_[b], c.single[b], c.sc, c.rope_joint, dx, grads, trainable, dsc, cond_grad,
                                 want_input);
            if (!want_input) return;
        }
        if (!below_single) return;

        Mat<T> dtxt = dx.topRows(L);
        Mat<T> dimg2 = dx.bottomRows(dx.rows() - L);
        for (std::size_t b = mm_.size(); b-- > 0;)
            mmdit_backward(mm_[b], c.mm[b], c.sc, c.rope_joint, dimg2, dtxt, grads, trainable, dsc, cond_grad);

        if (auto* g = g_of(img_in_)) img_in_.backward(params_, c.image_tokens, dimg2, g, false);
        if (L > 0)
            if (auto* g = g_of(txt_in_)) txt_in_.backward(params_, c.text, dtxt, g, false);

        if (cond_grad) {
            Mat<T> dcond = nn::silu_backward(c.cond, dsc);
            if (auto* g = g_of(vector_in_)) vector_in_.backward(params_, c.pooled, dcond, g, false);
            Mat<T> dth = time_fc2_.backward(params_, nn::silu(c.time_h), dcond, g_of(time_fc2_), true);
            time_fc1_.backward(params_, c.time_feat, nn::silu_backward(c.time_h, dth), g_of(time_fc1_), false);
            Mat<T> dgh = guid_fc2_.backward(params_, nn::silu(c.guid_h), dcond, g_of(guid_fc2_), true);
            guid_fc1_.backward(params_, c.guid_feat, nn::silu_backward(c.guid_h, dgh), g_of(guid_fc1_), false);
        }
    }

    const std::vector<MMDiTLayers>& mmdit_layers() const noexcept { return mm_; }
    const std::vector<SingleLayers>& single_layers() const noexcept { return single_; }

private:
    ModelConfig cfg_;
    nn::ParamStore<T> params_;
    Linear img_in_, txt_in_, vector_in_, time_fc1_, time_fc2_, guid_fc1_, guid_fc2_, final_mod_, head_;
    std::vector<MMDiTLayers> mm_;
    std::vector<SingleLayers> single_;
    std::vector<int> cond_ids_, mm_ids_, in_ids_;  // parameter groups used to prune backward

    static bool any_trainable(const std::vector<char>& t, const std::vector<int>& ids) {
        for (int i : ids)
            if (t[static_cast<std::size_t>(i)]) return true;
        return false;
    }

    void build_layout() {
        const int d = cfg_.d_model, hid = d * cfg_.mlp_ratio;
        auto& p = params_;
        auto track = [](std::vector<int>& ids, const Linear& l) {
            ids.push_back(l.weight);
            ids.push_back(l.bias);
            return l;
        };
        img_in_ = track(in_ids_, Linear::add(p, "img_in", cfg_.token_dim_in, d));
        txt_in_ = track(in_ids_, Linear::add(p, "txt_in", cfg_.d_text, d));
        vector_in_ = track(cond_ids_, Linear::add(p, "vector_in", cfg_.d_text, d));
        time_fc1_ = track(cond_ids_, Linear::add(p, "time_in.fc1", d, d));
        time_fc2_ = track(cond_ids_, Linear::add(p, "time_in.fc2", d, d));
        guid_fc1_ = track(cond_ids_, Linear::add(p, "guidance_in.fc1", d, d));
        guid_fc2_ = track(cond_ids_, Linear::add(p, "guidance_in.fc2", d, d));
        for (int i = 0; i < cfg_.n_mmdit; ++i) {
            const std::string pre = "mmdit." + std::to_string(i) + ".";
            MMDiTLayers l;
            l.img_mod = track(mm_ids_, Linear::add(p, pre + "img_mod", d, 6 * d));
            l.txt_mod = track(mm_ids_, Linear::add(p, pre + "txt_mod", d, 6 * d));
            l.q = track(mm_ids_, Linear::add(p, pre + "attn.q", d, d));
            l.k = track(mm_ids_, Linear::add(p, pre + "attn.k", d, d));
            l.v = track(mm_ids_, Linear::add(p, pre + "attn.v", d, d));
            l.o = track(mm_ids_, Linear::add(p, pre + "attn.o", d, d));
            l.tq = track(mm_ids_, Linear::add(p, pre + "attn.txt_q", d, d));
            l.tk = track(mm_ids_, Linear::add(p, pre + "attn.txt_k", d, d));
            l.tv = track(mm_ids_, Linear::add(p, pre + "attn.txt_v", d, d));
            l.to = track(mm_ids_, Linear::add(p, pre + "attn.txt_o", d, d));
            l.img_fc1 = track(mm_ids_, Linear::add(p, pre + "img_mlp.fc1", d, hid));
            l.img_fc2 = track(mm_ids_, Linear::add(p, pre + "img_mlp.fc2", hid, d));
            l.txt_fc1 = track(mm_ids_, Linear::add(p, pre + "txt_mlp.fc1", d, hid));
            l.txt_fc2 = track(mm_ids_, Linear::add(p, pre + "txt_mlp.fc2", hid, d));
            mm_.push_back(l);
        }
        for (int i = 0; i < cfg_.n_singledit; ++i) {
            const std::string pre = "single." + std::to_string(i) + ".";
            SingleLayers l;
            l.mod = Linear::add(p, pre + "mod", d, 3 * d);
            l.q = Linear::add(p, pre + "attn.q", d, d);
            l.k = Linear::add(p, pre + "attn.k", d, d);
            l.v = Linear::add(p, pre + "attn.v", d, d);
            l.o = Linear::add(p, pre + "attn.o", d, d);
            l.fc1 = Linear::add(p, pre + "mlp.fc1", d, hid);
            l.fc2 = Linear::add(p, pre + "mlp.fc2", hid, d);
            single_.push_back(l);
        }
        final_mod_ = Linear::add(p, "final.mod", d, 2 * d);
        head_ = Linear::add(p, "final.head", d, cfg_.out_dim);
    }

    /// Projections get truncated-normal weights; modulation (and so every
    /// residual gate) and the output head start at zero.
    void initialize() {
        Rng rng(derive_seed(cfg_.seed, 0x64697469ull));
        for (int i = 0; i < params_.size(); ++i) {
            const std::string& n = params_.name(i);
            const bool is_weight = n.ends_with(".weight");
            const bool zero = n.find("_mod.") != std::string::npos || n.find(".mod.") != std::string::npos ||
                              n.starts_with("final.");
            if (is_weight && !zero) nn::init_truncated_normal(params_[i], cfg_.init_std, rng);
        }
    }

    RowVec<T> embed_scalar(double v, const Linear& fc1, const Linear& fc2) const {
        Mat<T> h = fc1.forward(params_, Mat<T>(nn::sinusoidal<T>(v, cfg_.d_model)));
        return fc2.forward(params_, nn::silu(h)).row(0);
    }

    void check_block_inputs(const Mat<T>& img, const Positions& positions) const {
        require(img.cols() == cfg_.d_model, "block input dim ", img.cols(), " != d_model ", cfg_.d_model);
        require(static_cast<std::size_t>(img.rows()) == positions.size(), "block input has ", img.rows(),
                " tokens but ", positions.size(), " positions");
    }

    nn::RopeTable<T> joint_rope(int text_len, const Positions& positions) const {
        Positions all(static_cast<std::size_t>(text_len), {0, 0});
        all.insert(all.end(), positions.begin(), positions.end());
        return nn::RopeTable<T>::build(all, cfg_.head_dim(), cfg_.rope_row_dims, cfg_.rope_col_dims, cfg_.rope_theta);
    }

    // ------------------------------------------------------------ MM-DiT

    void stream_pre(const Linear& mod, const Mat<T>& x, const Mat<T>& sc, StreamCache<T>& s) const {
        const int d = cfg_.d_model;
        s.mod = mod.forward(params_, sc);
        nn::layer_norm(x, s.ln1);
        s.n1 = nn::modulate(s.ln1.xhat, detail::chunk(s.mod, 0, d), detail::chunk(s.mod, 1, d));
    }

    void stream_post(const Linear& o, const Linear& fc1, const Linear& fc2, Mat<T>& x, StreamCache<T>& s) const {
        const int d = cfg_.d_model;
        s.o_out = o.forward(params_, s.attn);
        x += detail::scale_cols<T>(s.o_out, detail::chunk(s.mod, 2, d));
        s.x_mid = x;
        nn::layer_norm(x, s.ln2);
        s.n2 = nn::modulate(s.ln2.xhat, detail::chunk(s.mod, 3, d), detail::chunk(s.mod, 4, d));
        s.h1 = fc1.forward(params_, s.n2);
        s.g = nn::gelu(s.h1);
        s.mlp_out = fc2.forward(params_, s.g);
        x += detail::scale_cols<T>(s.mlp_out, detail::chunk(s.mod, 5, d));
    }

    void mmdit_forward(const MMDiTLayers& l, Mat<T>& img, Mat<T>& txt, const Mat<T>& sc, const nn::RopeTable<T>& rope,
                       MMDiTCache<T>& c) const {
        const int d = cfg_.d_model;
        const auto L = txt.rows();
        const auto N = img.rows();
        c.text_len = static_cast<int>(L);
        stream_pre(l.img_mod, img, sc, c.img);
        if (L > 0) stream_pre(l.txt_mod, txt, sc, c.txt);

        Mat<T> q(L + N, d), k(L + N, d), v(L + N, d);
        q.bottomRows(N) = l.q.forward(params_, c.img.n1);
        k.bottomRows(N) = l.k.forward(params_, c.img.n1);
        v.bottomRows(N) = l.v.forward(params_, c.img.n1);
        if (L > 0) {
            q.topRows(L) = l.tq.forward(params_, c.txt.n1);
            k.topRows(L) = l.tk.forward(params_, c.txt.n1);
            v.topRows(L) = l.tv.forward(params_, c.txt.n1);
        }
        Mat<T> a = nn::attention(std::move(q), std::move(k), std::move(v), cfg_.n_heads, rope, c.attn);
        c.img.attn = a.bottomRows(N);
        stream_post(l.o, l.img_fc1, l.img_fc2, img, c.img);
        if (L > 0) {
            c.txt.attn = a.topRows(L);
            stream_post(l.to, l.txt_fc1, l.txt_fc2, txt, c.txt);
        }
    }

    /// Backward through the post-attention half of one stream. dx is the
    /// gradient of the block output; returns the gradient at the attention
    /// output and leaves the residual gradient at the block input in dx_res.
    Mat<T> stream_post_backward(const Linear& o, const Linear& fc1, const Linear& fc2, const StreamCache<T>& s,
                                const Mat<T>& dx, Mat<T>& dmod, Mat<T>& dx_res, nn::ParamStore<T>& grads,
                                const std::vector<char>& tr) const {
        const int d = cfg_.d_model;
        auto g_of = [&](const Linear& l) -> nn::ParamStore<T>* { return tr[l.weight] ? &grads : nullptr; };
        const RowVec<T> gate1 = detail::chunk(s.mod, 2, d), scale2 = detail::chunk(s.mod, 4, d),
                        gate2 = detail::chunk(s.mod, 5, d);
        // mlp branch
        dmod.row(0).segment(5 * d, d) = (dx.array() * s.mlp_out.array()).colwise().sum();
        Mat<T> dmlp = detail::scale_cols<T>(dx, gate2);
        Mat<T> dg = fc2.backward(params_, s.g, dmlp, g_of(fc2), true);
        Mat<T> dh = nn::gelu_backward(s.h1, dg);
        Mat<T> dn2 = fc1.backward(params_, s.n2, dh, g_of(fc1), true);
        dmod.row(0).segment(3 * d, d) = dn2.colwise().sum();
        dmod.row(0).segment(4 * d, d) = (dn2.array() * s.ln2.xhat.array()).colwise().sum();
        Mat<T> dmid = dx + nn::layer_norm_backward(s.ln2, detail::scale_cols<T>(dn2, (scale2.array() + T(1)).matrix()));
        // attention output branch
        dmod.row(0).segment(2 * d, d) = (dmid.array() * s.o_out.array()).colwise().sum();
        Mat<T> dattn = o.backward(params_, s.attn, detail::scale_cols<T>(dmid, gate1), g_of(o), true);
        dx_res = std::move(dmid);
        return dattn;
    }

    Mat<T> stream_pre_backward(const Linear& mod, const Linear& q, const Linear& k, const Linear& v,
                               const StreamCache<T>& s, const Mat<T>& dq, const Mat<T>& dk, const Mat<T>& dv,
                               Mat<T>& dmod, const Mat<T>& sc, Mat<T>& dsc, bool cond_grad, nn::ParamStore<T>& grads,
                               const std::vector<char>& tr, bool want_input) const {
        const int d = cfg_.d_model;
        auto g_of = [&](const Linear& l) -> nn::ParamStore<T>* { return tr[l.weight] ? &grads : nullptr; };
        const RowVec<T> scale1 = detail::chunk(s.mod, 1, d);
        Mat<T> dn1 = q.backward(params_, s.n1, dq, g_of(q), true);
        dn1 += k.backward(params_, s.n1, dk, g_of(k), true);
        dn1 += v.backward(params_, s.n1, dv, g_of(v), true);
        dmod.row(0).segment(0, d) = dn1.colwise().sum();
        dmod.row(0).segment(d, d) = (dn1.array() * s.ln1.xhat.array()).colwise().sum();
        if (auto* g = g_of(mod); g || cond_grad) {
            Mat<T> ds = mod.backward(params_, sc, dmod, g, cond_grad);
            if (cond_grad) dsc += ds;
        }
        if (!want_input) return {};
        return nn::layer_norm_backward(s.ln1, detail::scale_cols<T>(dn1, (scale1.array() + T(1)).matrix()));
    }

    void mmdit_backward(const MMDiTLayers& l, const MMDiTCache<T>& c, const Mat<T>& sc, const nn::RopeTable<T>& rope,
                        Mat<T>& dimg, Mat<T>& dtxt, nn::ParamStore<T>& grads, const std::vector<char>& tr, Mat<T>& dsc,
                        bool cond_grad) const {
        const int d = cfg_.d_model;
        const int L = c.text_len;
        const auto N = dimg.rows();
        Mat<T> dmod_i = Mat<T>::Zero(1, 6 * d), dmod_t = Mat<T>::Zero(1, 6 * d);
        Mat<T> res_i, res_t;
        Mat<T> da(L + N, d);
        da.bottomRows(N) = stream_post_backward(l.o, l.img_fc1, l.img_fc2, c.img, dimg, dmod_i, res_i, grads, tr);
        if (L > 0) da.topRows(L) = stream_post_backward(l.to, l.txt_fc1, l.txt_fc2, c.txt, dtxt, dmod_t, res_t, grads, tr);
        Mat<T> dq, dk, dv;
        nn::attention_backward(c.attn, da, cfg_.n_heads, rope, dq, dk, dv);
        Mat<T> din_i = stream_pre_backward(l.img_mod, l.q, l.k, l.v, c.img, dq.bottomRows(N), dk.bottomRows(N),
                                           dv.bottomRows(N), dmod_i, sc, dsc, cond_grad, grads, tr, true);
        dimg = res_i + din_i;
        if (L > 0) {
            Mat<T> din_t = stream_pre_backward(l.txt_mod, l.tq, l.tk, l.tv, c.txt, dq.topRows(L), dk.topRows(L),
                                               dv.topRows(L), dmod_t, sc, dsc, cond_grad, grads, tr, true);
            dtxt = res_t + din_t;
        }
    }

    // ------------------------------------------------------------ single stream

    void single_forward(const SingleLayers& l, Mat<T>& x, const Mat<T>& sc, const nn::RopeTable<T>& rope,
                        SingleCache<T>& c, bool include_mlp) const {
        const int d = cfg_.d_model;
        c.mod = l.mod.forward(params_, sc);
        nn::layer_norm(x, c.ln);
        c.n = nn::modulate(c.ln.xhat, detail::chunk(c.mod, 0, d), detail::chunk(c.mod, 1, d));
        c.attn = nn::attention(l.q.forward(params_, c.n), l.k.forward(params_, c.n), l.v.forward(params_, c.n),
                               cfg_.n_heads, rope, c.attn_cache);
        c.o_out = l.o.forward(params_, c.attn);
        Mat<T> branch = c.o_out;
        if (include_mlp) {
            c.h1 = l.fc1.forward(params_, c.n);
            c.g = nn::gelu(c.h1);
            c.mlp_out = l.fc2.forward(params_, c.g);
            branch += c.mlp_out;
        }
        x += detail::scale_cols<T>(branch, detail::chunk(c.mod, 2, d));
    }

    Mat<T> single_backward(const SingleLayers& l, const SingleCache<T>& c, const Mat<T>& sc,
                           const nn::RopeTable<T>& rope, const Mat<T>& dx, nn::ParamStore<T>& grads,
                           const std::vector<char>& tr, Mat<T>& dsc, bool cond_grad, bool want_input) const {
        const int d = cfg_.d_model;
        auto g_of = [&](const Linear& lin) -> nn::ParamStore<T>* { return tr[lin.weight] ? &grads : nullptr; };
        const RowVec<T> scale = detail::chunk(c.mod, 1, d), gate = detail::chunk(c.mod, 2, d);
        Mat<T> dmod(1, 3 * d);
        dmod.row(0).segment(2 * d, d) = (dx.array() * (c.o_out + c.mlp_out).array()).colwise().sum();
        Mat<T> dbranch = detail::scale_cols<T>(dx, gate);

        Mat<T> dattn = l.o.backward(params_, c.attn, dbranch, g_of(l.o), true);
        Mat<T> dq, dk, dv;
        nn::attention_backward(c.attn_cache, dattn, cfg_.n_heads, rope, dq, dk, dv);
        Mat<T> dn = l.q.backward(params_, c.n, dq, g_of(l.q), true);
        dn += l.k.backward(params_, c.n, dk, g_of(l.k), true);
        dn += l.v.backward(params_, c.n, dv, g_of(l.v), true);
        Mat<T> dg = l.fc2.backward(params_, c.g, dbranch, g_of(l.fc2), true);
        dn += l.fc1.backward(params_, c.n, nn::gelu_backward(c.h1, dg), g_of(l.fc1), true);

        dmod.row(0).segment(0, d) = dn.colwise().sum();
        dmod.row(0).segment(d, d) = (dn.array() * c.ln.xhat.array()).colwise().sum();
        if (auto* g = g_of(l.mod); g || cond_grad) {
            Mat<T> ds = l.mod.backward(params_, sc, dmod, g, cond_grad);
            if (cond_grad) dsc += ds;
        }
        if (!want_input) return {};
        return dx + nn::layer_norm_backward(c.ln, detail::scale_cols<T>(dn, (scale.array() + T(1)).matrix()));
    }
};

}  // namespace tryon::dit
