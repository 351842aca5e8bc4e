#include "tentacle/regressor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tentacle
{
    namespace
    {
        constexpr int kSchemaVersion = 1;

        struct Layout
        {
            Eigen::Index wx[2], wh[2], b[2];
            Eigen::Index w1, b1, w2, b2, total;
        };

        Layout layout (int H, int D)
        {
            Layout l{};
            Eigen::Index off = 0;
            for (int d = 0; d < 2; ++d)
            {
                l.wx[d] = off;
                off += 4 * H * D;
                l.wh[d] = off;
                off += 4 * H * H;
                l.b[d] = off;
                off += 4 * H;
            }
            l.w1 = off;
            off += H * 2 * H;
            l.b1 = off;
            off += H;
            l.w2 = off;
            off += 2 * H;
            l.b2 = off;
            off += 2;
            l.total = off;
            return l;
        }

        double sigmoid (double z) { return 1.0 / (1.0 + std::exp (-z)); }

        // Per-direction activations over one sequence, stored in processing order.
        struct LstmCache
        {
            Eigen::MatrixXd gates; // 4H x T, post-activation
            Eigen::MatrixXd c;     // H x T
            Eigen::MatrixXd h;     // H x T
        };

        // Runs one direction; column k of the cache is processing step k.
        LstmCache run_lstm (const LstmView &v, const Eigen::MatrixXd &x, bool reverse)
        {
            const Eigen::Index H = v.wh.cols ();
            const Eigen::Index T = x.cols ();
            LstmCache cache;
            cache.gates.resize (4 * H, T);
            cache.c.resize (H, T);
            cache.h.resize (H, T);
            const Eigen::MatrixXd zx = v.wx * x;
            Eigen::VectorXd h = Eigen::VectorXd::Zero (H);
            Eigen::VectorXd c = Eigen::VectorXd::Zero (H);
            Eigen::VectorXd z (4 * H);
            for (Eigen::Index k = 0; k < T; ++k)
            {
                const Eigen::Index t = reverse ? T - 1 - k : k;
                z.noalias () = zx.col (t) + v.b;
                z.noalias () += v.wh * h;
                for (Eigen::Index j = 0; j < H; ++j)
                {
                    const double ig = sigmoid (z (j));
                    const double fg = sigmoid (z (H + j));
                    const double gg = std::tanh (z (2 * H + j));
                    const double og = sigmoid (z (3 * H + j));
                    c (j) = fg * c (j) + ig * gg;
                    h (j) = og * std::tanh (c (j));
                    z (j) = ig;
                    z (H + j) = fg;
                    z (2 * H + j) = gg;
                    z (3 * H + j) = og;
                }
                cache.gates.col (k) = z;
                cache.c.col (k) = c;
                cache.h.col (k) = h;
            }
            return cache;
        }

        // Hidden states indexed by time, whatever the processing order.
        Eigen::MatrixXd by_time (const Eigen::MatrixXd &h, bool reverse)
        {
            return reverse ? Eigen::MatrixXd (h.rowwise ().reverse ()) : h;
        }

        // dh_time: H x T gradient w.r.t. the hidden states indexed by time.
        void backprop_lstm (const LstmView &v, const Eigen::MatrixXd &x, bool reverse, const LstmCache &cache,
                            const Eigen::MatrixXd &dh_time, double *gwx, double *gwh, double *gb)
        {
            const Eigen::Index H = v.wh.cols ();
            const Eigen::Index T = x.cols ();
            const Eigen::Index D = x.rows ();
            Eigen::MatrixXd dz (4 * H, T); // processing order
            Eigen::VectorXd dh_next = Eigen::VectorXd::Zero (H);
            Eigen::VectorXd dc_next = Eigen::VectorXd::Zero (H);
            for (Eigen::Index k = T - 1; k >= 0; --k)
            {
                const Eigen::Index t = reverse ? T - 1 - k : k;
                for (Eigen::Index j = 0; j < H; ++j)
                {
                    const double ig = cache.gates (j, k);
                    const double fg = cache.gates (H + j, k);
                    const double gg = cache.gates (2 * H + j, k);
                    const double og = cache.gates (3 * H + j, k);
                    const double c = cache.c (j, k);
                    const double cprev = k > 0 ? cache.c (j, k - 1) : 0.0;
                    const double tc = std::tanh (c);
                    const double dh = dh_time (j, t) + dh_next (j);
                    const double dc = dh * og * (1.0 - tc * tc) + dc_next (j);
                    dz (j, k) = dc * gg * ig * (1.0 - ig);
                    dz (H + j, k) = dc * cprev * fg * (1.0 - fg);
                    dz (2 * H + j, k) = dc * ig * (1.0 - gg * gg);
                    dz (3 * H + j, k) = dh * tc * og * (1.0 - og);
                    dc_next (j) = dc * fg;
                }
                dh_next.noalias () = v.wh.transpose () * dz.col (k);
            }
            Eigen::MatrixXd x_proc = reverse ? Eigen::MatrixXd (x.rowwise ().reverse ()) : x;
            Eigen::Map<Eigen::MatrixXd> dwx (gwx, 4 * H, D);
            Eigen::Map<Eigen::MatrixXd> dwh (gwh, 4 * H, H);
            Eigen::Map<Eigen::VectorXd> db (gb, 4 * H);
            dwx.noalias () += dz * x_proc.transpose ();
            if (T > 1)
                dwh.noalias () += dz.rightCols (T - 1) * cache.h.leftCols (T - 1).transpose ();
            db += dz.rowwise ().sum ();
        }

        void check_input (const RegressorWeights &w, const Eigen::MatrixXd &x)
        {
            if (x.rows () != w.input_dim)
            {
                std::ostringstream msg;
                msg << "regressor expects " << w.input_dim << " input channels, got " << x.rows ();
                throw DomainError (msg.str ());
            }
            if (x.cols () < 1)
                throw DomainError ("regressor input sequence is empty");
        }

        void stats (const std::vector<const Eigen::MatrixXd *> &mats, Eigen::Index cols, Eigen::VectorXd &mean,
                    Eigen::VectorXd &stdev)
        {
            mean = Eigen::VectorXd::Zero (cols);
            stdev = Eigen::VectorXd::Zero (cols);
            double n = 0.0;
            for (const auto *m : mats)
            {
                mean += m->colwise ().sum ().transpose ();
                n += static_cast<double> (m->rows ());
            }
            mean /= n;
            for (const auto *m : mats)
                stdev += (m->rowwise () - mean.transpose ()).array ().square ().colwise ().sum ().matrix ().transpose ();
            stdev = (stdev / n).cwiseSqrt ();
            for (Eigen::Index i = 0; i < cols; ++i)
                if (!(stdev (i) > 1e-12))
                    stdev (i) = 1.0;
        }

        std::vector<double> to_vector (const Eigen::VectorXd &v) { return {v.data (), v.data () + v.size ()}; }

        Eigen::VectorXd from_json (const nlohmann::json &j)
        {
            const auto v = j.get<std::vector<double>> ();
            return Eigen::Map<const Eigen::VectorXd> (v.data (), static_cast<Eigen::Index> (v.size ()));
        }
    } // namespace

    const char *target_name (TargetKind k) noexcept { return k == TargetKind::polynomial ? "polynomial" : "affine"; }

    TargetKind target_from_name (const std::string &name)
    {
        if (name == "affine")
            return TargetKind::affine;
        if (name == "polynomial")
            return TargetKind::polynomial;
        throw DomainError ("unknown target kind '" + name + "' (expected affine or polynomial)");
    }

    RegressorWeights::RegressorWeights (int hidden_size, int input_channels)
        : hidden (hidden_size), input_dim (input_channels)
    {
        if (hidden_size < 1 || input_channels < 1)
            throw DomainError ("hidden size and input channels must be >= 1");
        params = Eigen::VectorXd::Zero (parameter_count (hidden_size, input_channels));
        in_mean = Eigen::VectorXd::Zero (input_channels);
        in_std = Eigen::VectorXd::Ones (input_channels);
    }

    Eigen::Index RegressorWeights::parameter_count (int hidden_size, int input_channels) noexcept
    {
        return layout (hidden_size, input_channels).total;
    }

    void RegressorWeights::validate () const
    {
        if (hidden < 1 || input_dim < 1)
            throw DomainError ("hidden size and input channels must be >= 1");
        if (params.size () != parameter_count (hidden, input_dim))
            throw DomainError ("parameter vector has the wrong length");
        if (in_mean.size () != input_dim || in_std.size () != input_dim)
            throw DomainError ("input normalization has the wrong length");
        if (!params.allFinite () || !in_mean.allFinite () || !out_mean.allFinite ())
            throw DomainError ("weights must be finite");
        if (!(in_std.minCoeff () > 0.0) || !(out_std.minCoeff () > 0.0) || !in_std.allFinite () || !out_std.allFinite ())
            throw DomainError ("normalization std must be positive and finite");
    }

    LstmView lstm_view (const RegressorWeights &w, int d)
    {
        const auto l = layout (w.hidden, w.input_dim);
        const double *p = w.params.data ();
        const Eigen::Index H = w.hidden;
        return {Eigen::Map<const Eigen::MatrixXd> (p + l.wx[d], 4 * H, w.input_dim),
                Eigen::Map<const Eigen::MatrixXd> (p + l.wh[d], 4 * H, H),
                Eigen::Map<const Eigen::VectorXd> (p + l.b[d], 4 * H)};
    }

    HeadView head_view (const RegressorWeights &w)
    {
        const auto l = layout (w.hidden, w.input_dim);
        const double *p = w.params.data ();
        const Eigen::Index H = w.hidden;
        return {Eigen::Map<const Eigen::MatrixXd> (p + l.w1, H, 2 * H), Eigen::Map<const Eigen::VectorXd> (p + l.b1, H),
                Eigen::Map<const Eigen::MatrixXd> (p + l.w2, 2, H), Eigen::Map<const Eigen::VectorXd> (p + l.b2, 2)};
    }

    void LabeledSequence::validate () const
    {
        if (inputs.rows () != targets.rows ())
            throw DomainError ("inputs and targets differ in length");
        if (inputs.rows () < 2)
            throw DomainError ("labeled sequence needs at least 2 steps");
        if (targets.cols () != 2)
            throw DomainError ("targets must have 2 channels");
        if (!tips.empty () && static_cast<Eigen::Index> (tips.size ()) != inputs.rows ())
            throw DomainError ("tip series length differs from the inputs");
    }

    Eigen::MatrixXd forward_normalized (const RegressorWeights &w, const Eigen::MatrixXd &x)
    {
        check_input (w, x);
        const auto f = run_lstm (lstm_view (w, 0), x, false);
        const auto b = run_lstm (lstm_view (w, 1), x, true);
        const Eigen::Index H = w.hidden;
        Eigen::MatrixXd u (2 * H, x.cols ());
        u.topRows (H) = f.h;
        u.bottomRows (H) = by_time (b.h, true);
        const auto hv = head_view (w);
        Eigen::MatrixXd a = (hv.w1 * u).colwise () + hv.b1;
        a = a.array ().tanh ();
        return (hv.w2 * a).colwise () + hv.b2;
    }

    Eigen::MatrixXd forward (const RegressorWeights &w, const Eigen::MatrixXd &inputs)
    {
        w.validate ();
        if (inputs.cols () != w.input_dim)
            throw DomainError ("input has " + std::to_string (inputs.cols ()) + " channels, the regressor expects " +
                               std::to_string (w.input_dim));
        const Eigen::MatrixXd x =
            ((inputs.rowwise () - w.in_mean.transpose ()).array ().rowwise () / w.in_std.transpose ().array ())
                .matrix ()
                .transpose ();
        const Eigen::MatrixXd yn = forward_normalized (w, x);
        Eigen::MatrixXd out = yn.transpose ();
        for (int c = 0; c < 2; ++c)
            out.col (c) = out.col (c).array () * w.out_std (c) + w.out_mean (c);
        return out;
    }

    double loss (const Eigen::MatrixXd &pred, const Eigen::MatrixXd &target)
    {
        if (pred.rows () != target.rows () || pred.cols () != target.cols ())
            throw DomainError ("loss operands differ in shape");
        if (pred.size () == 0)
            throw DomainError ("loss of an empty prediction");
        return (pred - target).squaredNorm () / static_cast<double> (pred.size ());
    }

    LossGradient gradients (const RegressorWeights &w, std::span<const Chunk> batch)
    {
        if (batch.empty ())
            throw DomainError ("gradient of an empty batch");
        const auto l = layout (w.hidden, w.input_dim);
        const Eigen::Index H = w.hidden;
        double count = 0.0;
        for (const auto &ch : batch)
            count += static_cast<double> (ch.y.size ());

        LossGradient out;
        out.grad = Eigen::VectorXd::Zero (l.total);
        const auto hv = head_view (w);
        double *g = out.grad.data ();
        Eigen::Map<Eigen::MatrixXd> gw1 (g + l.w1, H, 2 * H);
        Eigen::Map<Eigen::VectorXd> gb1 (g + l.b1, H);
        Eigen::Map<Eigen::MatrixXd> gw2 (g + l.w2, 2, H);
        Eigen::Map<Eigen::VectorXd> gb2 (g + l.b2, 2);

        for (const auto &ch : batch)
        {
            check_input (w, ch.x);
            if (ch.y.rows () != 2 || ch.y.cols () != ch.x.cols ())
                throw DomainError ("chunk targets must be 2 x T");
            const auto fv = lstm_view (w, 0);
            const auto bv = lstm_view (w, 1);
            const auto f = run_lstm (fv, ch.x, false);
            const auto b = run_lstm (bv, ch.x, true);
            Eigen::MatrixXd u (2 * H, ch.x.cols ());
            u.topRows (H) = f.h;
            u.bottomRows (H) = by_time (b.h, true);
            Eigen::MatrixXd a = ((hv.w1 * u).colwise () + hv.b1).array ().tanh ();
            const Eigen::MatrixXd y = (hv.w2 * a).colwise () + hv.b2;
            const Eigen::MatrixXd r = y - ch.y;
            out.loss += r.squaredNorm ();

            const Eigen::MatrixXd dy = (2.0 / count) * r;
            gw2.noalias () += dy * a.transpose ();
            gb2 += dy.rowwise ().sum ();
            const Eigen::MatrixXd dz1 = ((hv.w2.transpose () * dy).array () * (1.0 - a.array ().square ())).matrix ();
            gw1.noalias () += dz1 * u.transpose ();
            gb1 += dz1.rowwise ().sum ();
            const Eigen::MatrixXd du = hv.w1.transpose () * dz1;
            backprop_lstm (fv, ch.x, false, f, du.topRows (H), g + l.wx[0], g + l.wh[0], g + l.b[0]);
            backprop_lstm (bv, ch.x, true, b, du.bottomRows (H), g + l.wx[1], g + l.wh[1], g + l.b[1]);
        }
        out.loss /= count;
        return out;
    }

    void TrainConfig::validate () const
    {
        if (!(lr0 > 0.0))
            throw DomainError ("lr0 must be positive");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0))
            throw DomainError ("lr_decay must lie in (0, 1]");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw DomainError ("momentum must lie in [0, 1)");
        if (epochs < 1)
            throw DomainError ("epochs must be >= 1");
        if (sequence_chunk < 2)
            throw DomainError ("sequence_chunk must be >= 2");
        if (hidden < 1)
            throw DomainError ("hidden size must be >= 1");
    }

    std::vector<Chunk> make_chunks (const RegressorWeights &w, std::span<const LabeledSequence> data, int chunk)
    {
        std::vector<Chunk> out;
        for (const auto &seq : data)
        {
            seq.validate ();
            if (seq.inputs.cols () != w.input_dim)
                throw DomainError ("sequence channel count differs from the regressor");
            const Eigen::Index T = seq.inputs.rows ();
            for (Eigen::Index s = 0; s + 1 < T; s += chunk)
            {
                const Eigen::Index len = std::min<Eigen::Index> (chunk, T - s);
                if (len < 2)
                    break;
                Chunk c;
                c.x = ((seq.inputs.middleRows (s, len).rowwise () - w.in_mean.transpose ()).array ().rowwise () /
                       w.in_std.transpose ().array ())
                          .matrix ()
                          .transpose ();
                c.y = ((seq.targets.middleRows (s, len).rowwise () - w.out_mean.transpose ()).array ().rowwise () /
                       w.out_std.transpose ().array ())
                          .matrix ()
                          .transpose ();
                out.push_back (std::move (c));
            }
        }
        return out;
    }

    TrainResult train (std::span<const LabeledSequence> data, const TrainConfig &cfg, TargetKind target)
    {
        cfg.validate ();
        if (data.empty ())
            throw DomainError ("training data is empty");
        const int D = static_cast<int> (data.front ().inputs.cols ());
        RegressorWeights w (cfg.hidden, D);
        w.target = target;
        std::vector<const Eigen::MatrixXd *> ins, outs;
        for (const auto &s : data)
        {
            s.validate ();
            if (s.inputs.cols () != D)
                throw DomainError ("training sequences differ in channel count");
            ins.push_back (&s.inputs);
            outs.push_back (&s.targets);
        }
        stats (ins, D, w.in_mean, w.in_std);
        Eigen::VectorXd om, os;
        stats (outs, 2, om, os);
        w.out_mean = om;
        w.out_std = os;

        std::mt19937_64 rng (cfg.seed);
        const double bound = 1.0 / std::sqrt (static_cast<double> (cfg.hidden));
        std::uniform_real_distribution<double> u (-bound, bound);
        for (Eigen::Index i = 0; i < w.params.size (); ++i)
            w.params (i) = u (rng);
        return train_from (std::move (w), data, cfg);
    }

    TrainResult train_from (RegressorWeights w, std::span<const LabeledSequence> data, const TrainConfig &cfg)
    {
        cfg.validate ();
        w.validate ();
        const auto chunks = make_chunks (w, data, cfg.sequence_chunk);
        if (chunks.empty ())
            throw DomainError ("training data yields no chunks");

        std::mt19937_64 rng (cfg.seed ^ 0x9e3779b97f4a7c15ULL);
        std::vector<std::size_t> order (chunks.size ());
        std::iota (order.begin (), order.end (), std::size_t{0});
        Eigen::VectorXd velocity = Eigen::VectorXd::Zero (w.params.size ());
        double lr = cfg.lr0;

        TrainResult res;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch)
        {
            for (std::size_t i = order.size (); i > 1; --i)
            {
                std::uniform_int_distribution<std::size_t> pick (0, i - 1);
                std::swap (order[i - 1], order[pick (rng)]);
            }
            double total = 0.0;
            for (std::size_t k : order)
            {
                const auto lg = gradients (w, std::span (&chunks[k], 1));
                if (!std::isfinite (lg.loss) || !lg.grad.allFinite ())
                {
                    std::ostringstream msg;
                    msg << "training diverged in epoch " << epoch + 1 << " (loss " << lg.loss << ")";
                    throw std::runtime_error (msg.str ());
                }
                total += lg.loss;
                velocity = cfg.momentum * velocity - lr * lg.grad;
                w.params += velocity;
            }
            res.loss_history.push_back (total / static_cast<double> (chunks.size ()));
            lr *= cfg.lr_decay;
        }
        if (!w.params.allFinite ())
            throw std::runtime_error ("training produced non-finite weights");
        res.weights = std::move (w);
        return res;
    }

    FitReport evaluate (const RegressorWeights &w, std::span<const LabeledSequence> data, const TentacleGeometry &geom)
    {
        if (data.empty ())
            throw DomainError ("evaluation data is empty");
        std::vector<Point2> tips;
        bool have_tips = true;
        for (const auto &s : data)
            have_tips = have_tips && !s.tips.empty ();

        if (w.target == TargetKind::affine)
        {
            std::vector<CurvatureState> pred, truth;
            for (const auto &s : data)
            {
                s.validate ();
                const Eigen::MatrixXd p = forward (w, s.inputs);
                for (Eigen::Index t = 0; t < p.rows (); ++t)
                {
                    pred.push_back ({p (t, 0), p (t, 1)});
                    truth.push_back ({s.targets (t, 0), s.targets (t, 1)});
                }
                if (have_tips)
                    tips.insert (tips.end (), s.tips.begin (), s.tips.end ());
            }
            return fit_report (pred, truth, geom, tips);
        }
        std::vector<PolyCoeffs> pred, truth;
        for (const auto &s : data)
        {
            s.validate ();
            const Eigen::MatrixXd p = forward (w, s.inputs);
            for (Eigen::Index t = 0; t < p.rows (); ++t)
            {
                pred.push_back ({0.0, 0.0, p (t, 0), p (t, 1)});
                truth.push_back ({0.0, 0.0, s.targets (t, 0), s.targets (t, 1)});
            }
            if (have_tips)
                tips.insert (tips.end (), s.tips.begin (), s.tips.end ());
        }
        return fit_report (pred, truth, geom, tips);
    }

    void save_weights (std::ostream &os, const RegressorWeights &w)
    {
        w.validate ();
        nlohmann::json j;
        j["schema_version"] = kSchemaVersion;
        j["kind"] = "bilstm_regressor";
        j["hidden"] = w.hidden;
        j["input_dim"] = w.input_dim;
        j["target"] = target_name (w.target);
        j["in_mean"] = to_vector (w.in_mean);
        j["in_std"] = to_vector (w.in_std);
        j["out_mean"] = to_vector (w.out_mean);
        j["out_std"] = to_vector (w.out_std);
        j["params"] = to_vector (w.params);
        os << j.dump (1) << '\n';
    }

    RegressorWeights load_weights (std::istream &is)
    {
        nlohmann::json j;
        try
        {
            is >> j;
        }
        catch (const nlohmann::json::exception &e)
        {
            throw DomainError (std::string ("weights file is not valid JSON: ") + e.what ());
        }
        try
        {
            if (j.at ("schema_version").get<int> () != kSchemaVersion)
                throw DomainError ("unsupported weights schema version " + j.at ("schema_version").dump ());
            RegressorWeights w (j.at ("hidden").get<int> (), j.at ("input_dim").get<int> ());
            w.target = target_from_name (j.at ("target").get<std::string> ());
            w.in_mean = from_json (j.at ("in_mean"));
            w.in_std = from_json (j.at ("in_std"));
            const auto om = from_json (j.at ("out_mean"));
            const auto osd = from_json (j.at ("out_std"));
            if (om.size () != 2 || osd.size () != 2)
                throw DomainError ("output normalization must have 2 entries");
            w.out_mean = om;
            w.out_std = osd;
            w.params = from_json (j.at ("params"));
            w.validate ();
            return w;
        }
        catch (const nlohmann::json::exception &e)
        {
            throw DomainError (std::string ("malformed weights file: ") + e.what ());
        }
    }

} // namespace tentacle
