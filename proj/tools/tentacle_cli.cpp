// tentacle: batch driver for datasets, training, evaluation, metric sweeps,
// Bayesian optimization, synthetic images and the HTML report.

#include "tentacle/csv.hpp"
#include "tentacle/pipeline.hpp"
#include "tentacle/report.hpp"
#include "tentacle/vision.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tentacle;

namespace
{
    /// Bad flags or unreadable inputs: exit code 1.
    class UsageError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    struct Common
    {
        std::string config;
        std::optional<std::uint64_t> seed;
        std::string out;
        std::string material;
    };

    void add_common (CLI::App *sub, Common &c)
    {
        sub->add_option ("--config", c.config, "Run configuration (JSON); defaults apply when omitted");
        sub->add_option ("--seed", c.seed, "Master seed, overrides the config");
        sub->add_option ("--out", c.out, "Output directory (default: <output_dir>/<command>)");
        sub->add_option ("--material", c.material, "Preset when no config is given (dragonskin | ecoflex)");
    }

    RunConfig resolve (const Common &c)
    {
        RunConfig cfg;
        if (!c.config.empty ())
        {
            if (!c.material.empty ())
                throw UsageError ("--material only applies without --config");
            cfg = load_config (c.config);
        }
        else if (!c.material.empty ())
        {
            try
            {
                cfg = default_config (material_from_name (c.material));
            }
            catch (const DomainError &e)
            {
                throw ConfigError (std::string ("material: ") + e.what ());
            }
        }
        else
            cfg = default_config ();
        if (c.seed)
            cfg.seed = *c.seed;
        cfg.validate ();
        return cfg;
    }

    std::string read_file (const fs::path &p, const char *what)
    {
        std::ifstream in (p, std::ios::binary);
        if (!in)
            throw UsageError (std::string ("cannot open ") + what + " '" + p.string () + "'");
        std::ostringstream ss;
        ss << in.rdbuf ();
        return ss.str ();
    }

    std::string dump (const json &j) { return j.dump (2) + "\n"; }

    /// Output directory that records every written file for the manifest.
    class OutDir
    {
    public:
        OutDir (const Common &c, const RunConfig &cfg, const std::string &command)
            : dir_ (c.out.empty () ? fs::path (cfg.output_dir) / command : fs::path (c.out)), command_ (command),
              cfg_ (cfg), hash_ (config_hash (cfg))
        {
            std::error_code ec;
            fs::create_directories (dir_, ec);
            if (ec || !fs::is_directory (dir_))
                throw UsageError ("cannot create output directory '" + dir_.string () + "'");
        }

        void write (const std::string &name, const std::string &content)
        {
            const auto path = dir_ / name;
            std::ofstream out (path, std::ios::binary);
            out << content;
            out.close ();
            if (!out)
                throw UsageError ("cannot write '" + path.string () + "'");
            files_[name] = sha256_hex (content);
        }

        void input (const std::string &label, const std::string &content) { inputs_[label] = sha256_hex (content); }

        /// Writes config.json and manifest.json; `rerun` lists command-specific flags.
        void finish (json parameters, const std::string &rerun_flags)
        {
            auto cfg_json = config_to_json (cfg_);
            write ("config.json", dump (cfg_json));
            json m;
            m["schema_version"] = 1;
            m["command"] = command_;
            m["config_hash"] = hash_;
            m["config"] = cfg_json;
            m["seeds"] = {
                {"master", cfg_.seed},
                {"train_program", derive_seed (cfg_.seed, SeedStream::train_program)},
                {"test_program", derive_seed (cfg_.seed, SeedStream::test_program)},
                {"train_noise", derive_seed (cfg_.seed, SeedStream::train_noise)},
                {"test_noise", derive_seed (cfg_.seed, SeedStream::test_noise)},
                {"train_init", derive_seed (cfg_.seed, SeedStream::train_init)},
                {"optimize", derive_seed (cfg_.seed, SeedStream::optimize)},
                {"sweep_noise", derive_seed (cfg_.seed, SeedStream::sweep_noise)},
                {"channels", derive_seed (cfg_.seed, SeedStream::channels)},
            };
            m["parameters"] = std::move (parameters);
            m["inputs"] = inputs_;
            m["outputs"] = files_;
            m["rerun"] = "tentacle " + command_ + " --config config.json" + rerun_flags + " --out <dir>";
            const auto text = dump (m);
            std::ofstream out (dir_ / "manifest.json", std::ios::binary);
            out << text;
            if (!out)
                throw UsageError ("cannot write manifest in '" + dir_.string () + "'");
        }

        [[nodiscard]] const std::string &hash () const { return hash_; }
        [[nodiscard]] const fs::path &path () const { return dir_; }

    private:
        fs::path dir_;
        std::string command_;
        RunConfig cfg_;
        std::string hash_;
        std::map<std::string, std::string> files_;
        std::map<std::string, std::string> inputs_;
    };

    std::string stamp (const std::string &hash) { return "config_hash " + hash; }

    SimTrace load_trace (const std::string &path, const char *default_name, OutDir &out, const char *label)
    {
        fs::path p (path);
        if (fs::is_directory (p))
            p /= default_name;
        const auto text = read_file (p, "trace file");
        out.input (label, text);
        std::istringstream in (text);
        return read_trace_csv (in);
    }

    RegressorWeights load_weights_file (const std::string &path, OutDir &out)
    {
        const auto text = read_file (path, "weights file");
        out.input (fs::path (path).filename ().string (), text);
        std::istringstream in (text);
        return load_weights (in);
    }

    std::string report_json (const FitReport &r)
    {
        return json{{"nrmse_seg1_pct", r.nrmse_seg1},
                    {"nrmse_seg2_pct", r.nrmse_seg2},
                    {"abs_tip_err_mean_mm", r.abs_tip_err_mean},
                    {"abs_tip_err_std_mm", r.abs_tip_err_std},
                    {"rel_tip_err_pct", r.rel_tip_err}}
            .dump ();
    }

    json report_obj (const FitReport &r) { return json::parse (report_json (r)); }

    // ---------------------------------------------------------------- dataset

    int cmd_dataset (const Common &c, std::optional<double> duration, std::optional<double> split)
    {
        auto cfg = resolve (c);
        if (duration)
            cfg.dataset.train_duration_s = *duration;
        if (split)
            cfg.dataset.test_duration_s = *split;
        cfg.validate ();
        OutDir out (c, cfg, "dataset");
        const auto train = generate_trace (cfg, cfg.dataset.train_duration_s,
                                           derive_seed (cfg.seed, SeedStream::train_program),
                                           derive_seed (cfg.seed, SeedStream::train_noise));
        const auto test = generate_trace (cfg, cfg.dataset.test_duration_s,
                                          derive_seed (cfg.seed, SeedStream::test_program),
                                          derive_seed (cfg.seed, SeedStream::test_noise));
        std::ostringstream a, b;
        write_trace_csv (a, train, cfg.geometry);
        write_trace_csv (b, test, cfg.geometry);
        out.write ("train.csv", a.str ());
        out.write ("test.csv", b.str ());
        out.finish ({{"train_rows", train.size ()}, {"test_rows", test.size ()}}, "");
        std::cout << "dataset: " << train.size () << " train rows, " << test.size () << " test rows -> "
                  << out.path ().string () << "\n";
        return 0;
    }

    // ------------------------------------------------------------------ train

    std::vector<TargetKind> parse_targets (const std::string &t)
    {
        if (t == "both")
            return {TargetKind::affine, TargetKind::polynomial};
        try
        {
            return {target_from_name (t)};
        }
        catch (const DomainError &)
        {
            throw UsageError ("--target must be affine, polynomial or both");
        }
    }

    int cmd_train (const Common &c, const std::string &data, const std::string &target, std::optional<int> epochs)
    {
        auto cfg = resolve (c);
        if (epochs)
            cfg.train.epochs = *epochs;
        cfg.validate ();
        const auto targets = parse_targets (target);
        OutDir out (c, cfg, "train");
        const auto trace = load_trace (data, "train.csv", out, "train.csv");
        json summary = json::object ();
        for (auto kind : targets)
        {
            const auto seq = to_labeled (trace, kind, cfg.geometry);
            TrainConfig tc = cfg.train;
            tc.seed = derive_seed (cfg.seed, SeedStream::train_init);
            TrainResult res;
            try
            {
                res = train (std::span (&seq, 1), tc, kind);
            }
            catch (const std::runtime_error &e)
            {
                throw std::runtime_error (std::string ("training diverged (") + target_name (kind) + "): " + e.what ());
            }
            const auto &h = res.loss_history;
            if (h.size () > 1 && !(h.back () < h.front ()))
                throw std::runtime_error (std::string ("training did not converge (") + target_name (kind) +
                                          "): final loss " + csv::format (h.back ()) + " is not below the first epoch's " +
                                          csv::format (h.front ()));
            std::ostringstream w;
            save_weights (w, res.weights);
            auto wj = json::parse (w.str ());
            wj["config_hash"] = out.hash ();
            const std::string name = target_name (kind);
            out.write ("weights_" + name + ".json", dump (wj));
            std::ostringstream l;
            csv::Writer lw (l, {"epoch", "loss"});
            for (std::size_t e = 0; e < h.size (); ++e)
            {
                lw << static_cast<long long> (e + 1) << h[e];
                lw.end_row ();
            }
            out.write ("loss_" + name + ".csv", l.str ());
            summary[name] = {{"epochs", h.size ()}, {"first_loss", h.front ()}, {"final_loss", h.back ()}};
            std::cout << "train " << name << ": loss " << h.front () << " -> " << h.back () << "\n";
        }
        out.finish ({{"target", target}, {"losses", summary}}, " --data <train.csv> --target " + target);
        return 0;
    }

    // ------------------------------------------------------------------- eval

    Polyline predicted_shape (TargetKind kind, double a, double b, const TentacleGeometry &g)
    {
        if (kind == TargetKind::affine)
            return sample_centerline ({a, b}, g);
        return poly_centerline ({0.0, 0.0, a, b}, g.length_mm, g.n_samples);
    }

    int cmd_eval (const Common &c, const std::vector<std::string> &weights, const std::string &test,
                  const std::string &predictions, const std::string &target, int snapshots)
    {
        auto cfg = resolve (c);
        if (weights.empty () == predictions.empty ())
            throw UsageError ("eval needs either --weights (with --test) or --predictions");
        if (snapshots < 1)
            throw UsageError ("--snapshots must be >= 1");
        OutDir out (c, cfg, "eval");
        json results = json::object ();
        std::ostringstream table;
        csv::Writer tw (table, {"target", "nrmse_seg1_pct", "nrmse_seg2_pct", "abs_tip_err_mean_mm",
                                "abs_tip_err_std_mm", "rel_tip_err_pct"});
        auto add_row = [&] (const std::string &name, const FitReport &r) {
            results[name] = report_obj (r);
            tw << name << r.nrmse_seg1 << r.nrmse_seg2 << r.abs_tip_err_mean << r.abs_tip_err_std << r.rel_tip_err;
            tw.end_row ();
            std::cout << "eval " << name << ": NRMSE " << r.nrmse_seg1 << "% / " << r.nrmse_seg2 << "%, tip "
                      << r.abs_tip_err_mean << " +- " << r.abs_tip_err_std << " mm, rel " << r.rel_tip_err << "%\n";
        };

        if (!predictions.empty ())
        {
            TargetKind kind;
            try
            {
                kind = target_from_name (target);
            }
            catch (const DomainError &)
            {
                throw UsageError ("--target must be affine or polynomial with --predictions");
            }
            const auto text = read_file (predictions, "predictions file");
            out.input ("predictions", text);
            std::istringstream in (text);
            const auto t = csv::read (in, {"t", "pred1", "pred2", "true1", "true2"});
            const auto p1 = t.values ("pred1"), p2 = t.values ("pred2"), t1 = t.values ("true1"), t2 = t.values ("true2");
            FitReport r;
            if (kind == TargetKind::affine)
            {
                std::vector<CurvatureState> a, b;
                for (std::size_t i = 0; i < p1.size (); ++i)
                {
                    a.push_back ({p1[i], p2[i]});
                    b.push_back ({t1[i], t2[i]});
                }
                r = fit_report (a, b, cfg.geometry);
            }
            else
            {
                std::vector<PolyCoeffs> a, b;
                for (std::size_t i = 0; i < p1.size (); ++i)
                {
                    a.push_back ({0.0, 0.0, p1[i], p2[i]});
                    b.push_back ({0.0, 0.0, t1[i], t2[i]});
                }
                r = fit_report (a, b, cfg.geometry);
            }
            add_row (target_name (kind), r);
        }
        else
        {
            if (test.empty ())
                throw UsageError ("--weights requires --test");
            const auto trace = load_trace (test, "test.csv", out, "test.csv");
            for (const auto &wpath : weights)
            {
                const auto w = load_weights_file (wpath, out);
                const auto seq = to_labeled (trace, w.target, cfg.geometry);
                if (w.input_dim != seq.inputs.cols ())
                    throw UsageError ("weights '" + wpath + "' expect " + std::to_string (w.input_dim) + " channels");
                const auto report = evaluate (w, std::span (&seq, 1), cfg.geometry);
                const std::string name = target_name (w.target);
                add_row (name, report);

                const Eigen::MatrixXd pred = forward (w, seq.inputs);
                std::ostringstream ps;
                csv::Writer pw (ps, {"t", "pred1", "pred2", "true1", "true2"});
                for (Eigen::Index i = 0; i < pred.rows (); ++i)
                {
                    pw << trace.time[static_cast<std::size_t> (i)] << pred (i, 0) << pred (i, 1) << seq.targets (i, 0)
                       << seq.targets (i, 1);
                    pw.end_row ();
                }
                out.write ("predictions_" + name + ".csv", ps.str ());

                std::vector<Polyline> truth, recon;
                const auto T = static_cast<std::size_t> (pred.rows ());
                for (int k = 1; k <= snapshots; ++k)
                {
                    const auto i = static_cast<Eigen::Index> (k * (T - 1) / static_cast<std::size_t> (snapshots + 1));
                    truth.push_back (sample_centerline (trace.q[static_cast<std::size_t> (i)], cfg.geometry));
                    recon.push_back (predicted_shape (w.target, pred (i, 0), pred (i, 1), cfg.geometry));
                }
                out.write ("overlay_" + name + ".svg",
                           svg_overlay ("Reconstructed vs true centerlines (" + name + " target)", truth, recon,
                                        stamp (out.hash ())));
            }
        }
        out.write ("table.csv", table.str ());
        out.write ("report.json", dump ({{"config_hash", out.hash ()}, {"results", results}}));
        out.finish ({{"snapshots", snapshots}}, predictions.empty () ? " --weights <w.json> --test <test.csv>"
                                                                     : " --predictions <p.csv> --target " + target);
        return 0;
    }

    // ---------------------------------------------------------------- metrics

    std::vector<Series> curves (std::span<const PointMetrics> rows, double PointMetrics::*field,
                                std::span<const double> amps)
    {
        std::vector<Series> out;
        for (double a : amps)
        {
            Series s;
            s.label = "A = " + csv::format (a) + " deg";
            for (const auto &r : rows)
                if (r.a_deg == a)
                {
                    s.x.push_back (r.f_ratio);
                    s.y.push_back (r.*field);
                }
            out.push_back (std::move (s));
        }
        return out;
    }

    void write_modes (OutDir &out, const PointMetrics &pm, const RunConfig &cfg)
    {
        std::vector<double> stations;
        for (int i = 0; i < cfg.metrics.stations; ++i)
            stations.push_back (static_cast<double> (i) / (cfg.metrics.stations - 1));
        std::ostringstream ms;
        write_modes_csv (ms, pm.modes, stations, std::min<std::size_t> (3, pm.modes.modes.size ()));
        out.write ("modes.csv", ms.str ());
        if (!pm.modes.modes.empty ())
            out.write ("modes.svg",
                       svg_mode_snapshots ("Dominant mode at f/f0 = " + csv::format (pm.f_ratio) +
                                               ", A = " + csv::format (pm.a_deg) + " deg (TWI " +
                                               csv::format (std::round (pm.twi * 1000.0) / 1000.0) + ")",
                                           stations, pm.modes.modes.front (), 8, stamp (out.hash ())));
    }

    int cmd_metrics (const Common &c, const std::string &weights_path, const std::string &trace_path,
                     std::optional<double> frequency)
    {
        auto cfg = resolve (c);
        OutDir out (c, cfg, "metrics");
        std::optional<RegressorWeights> weights;
        if (!weights_path.empty ())
        {
            weights = load_weights_file (weights_path, out);
            if (weights->target != TargetKind::affine)
                throw UsageError ("metrics need affine-target weights");
        }
        const std::string source = weights ? "reconstructed" : "truth";

        if (!trace_path.empty ())
        {
            if (!frequency || !(*frequency > 0.0))
                throw UsageError ("--trace needs a positive --frequency");
            auto trace = load_trace (trace_path, "test.csv", out, "trace");
            std::vector<CurvatureState> q = trace.q;
            if (weights)
            {
                Eigen::MatrixXd in (static_cast<Eigen::Index> (trace.size ()), 3);
                for (std::size_t i = 0; i < trace.size (); ++i)
                    in.row (static_cast<Eigen::Index> (i)) = trace.pressure[i].transpose ();
                const Eigen::MatrixXd pred = forward (*weights, in);
                for (std::size_t i = 0; i < q.size (); ++i)
                    q[i] = {pred (static_cast<Eigen::Index> (i), 0), pred (static_cast<Eigen::Index> (i), 1)};
            }
            double a = 0.0;
            for (double th : trace.theta_deg)
                a = std::max (a, std::abs (th));
            auto pm = metrics_from_states (cfg, *frequency, a, q, trace.theta_deg, trace.dt);
            std::ostringstream ms;
            write_metrics_csv (ms, std::span (&pm, 1));
            out.write ("metrics.csv", ms.str ());
            write_modes (out, pm, cfg);
            out.finish ({{"source", source}, {"frequency_hz", *frequency}},
                        " --trace <trace.csv> --frequency " + csv::format (*frequency) +
                            (weights ? " --weights <w.json>" : ""));
            std::cout << "metrics (" << source << "): thrust " << pm.thrust_mN << " mN, deflection "
                      << pm.tip_defl_deg << " deg, TWI " << pm.twi << "\n";
            return 0;
        }

        const auto rows = sweep (cfg, weights ? &*weights : nullptr);
        std::vector<PointMetrics> truth, chosen;
        for (const auto &r : rows)
        {
            truth.push_back (r.truth);
            chosen.push_back (weights ? *r.reconstructed : r.truth);
        }
        std::ostringstream ms;
        write_metrics_csv (ms, chosen);
        out.write ("metrics.csv", ms.str ());
        if (weights)
        {
            std::ostringstream ts;
            write_metrics_csv (ts, truth);
            out.write ("metrics_truth.csv", ts.str ());
        }
        const auto peak = std::max_element (chosen.begin (), chosen.end (),
                                            [] (const auto &a, const auto &b) { return a.twi < b.twi; });
        write_modes (out, *peak, cfg);

        const auto &amps = cfg.metrics.amplitudes_deg;
        const auto st = stamp (out.hash ());
        out.write ("thrust.svg", svg_line_plot ("Thrust proxy (" + source + ")", "f / f0", "thrust (mN)",
                                                curves (chosen, &PointMetrics::thrust_mN, amps), st));
        out.write ("tip_deflection.svg", svg_line_plot ("Tip deflection (" + source + ")", "f / f0", "deflection (deg)",
                                                        curves (chosen, &PointMetrics::tip_defl_deg, amps), st));
        out.write ("twi.svg", svg_line_plot ("Traveling wave index (" + source + ")", "f / f0", "TWI",
                                             curves (chosen, &PointMetrics::twi, amps), st));

        json summary = {{"config_hash", out.hash ()},
                        {"source", source},
                        {"points", chosen.size ()},
                        {"twi_peak", {{"f_ratio", peak->f_ratio}, {"A_deg", peak->a_deg}, {"twi", peak->twi}}}};
        if (weights)
        {
            double dtwi = 0.0, ddefl = 0.0;
            for (std::size_t i = 0; i < rows.size (); ++i)
            {
                dtwi = std::max (dtwi, std::abs (chosen[i].twi - truth[i].twi));
                if (truth[i].tip_defl_deg > 0.0)
                    ddefl = std::max (ddefl, std::abs (chosen[i].tip_defl_deg - truth[i].tip_defl_deg) /
                                                 truth[i].tip_defl_deg);
            }
            summary["max_abs_twi_diff"] = dtwi;
            summary["max_rel_deflection_diff"] = ddefl;
        }
        out.write ("summary.json", dump (summary));
        out.finish ({{"source", source}}, weights ? " --weights <w.json>" : "");
        std::cout << "metrics (" << source << "): " << chosen.size () << " points, TWI peak " << peak->twi
                  << " at f/f0 = " << peak->f_ratio << ", A = " << peak->a_deg << "\n";
        return 0;
    }

    // --------------------------------------------------------------- optimize

    int cmd_optimize (const Common &c, std::optional<int> budget)
    {
        auto cfg = resolve (c);
        if (budget)
            cfg.optimize.budget = *budget;
        cfg.validate ();
        OutDir out (c, cfg, "optimize");
        const auto space = search_space (cfg);
        const auto res = optimize ([&] (double f, double a) { return bo_objective (cfg, f, a); }, space,
                                   cfg.optimize.budget, derive_seed (cfg.seed, SeedStream::optimize), cfg.optimize.rho,
                                   cfg.optimize.hyper);
        std::ostringstream hs;
        write_history_csv (hs, res.history);
        out.write ("history.csv", hs.str ());
        const auto &b = res.best;
        out.write ("best.json", dump ({{"config_hash", out.hash ()},
                                       {"iter", b.iter},
                                       {"f_hz", b.f_hz},
                                       {"f_ratio", b.f_hz / cfg.sim.f0},
                                       {"A_deg", b.a_deg},
                                       {"twi", b.value.objective},
                                       {"tip_defl_deg", b.value.tip_defl_deg},
                                       {"thrust_mN", b.value.thrust_mN},
                                       {"evaluations", res.history.size ()},
                                       {"failures", res.failures}}));
        Series s{"evaluated", {}, {}}, best{"best so far", {}, {}};
        double run = -1.0;
        for (const auto &r : res.history)
        {
            run = std::max (run, r.value.objective);
            s.x.push_back (r.iter);
            s.y.push_back (r.value.objective);
            best.x.push_back (r.iter);
            best.y.push_back (run);
        }
        const Series both[] = {s, best};
        out.write ("history.svg", svg_line_plot ("Bayesian optimization of TWI", "iteration", "TWI", both,
                                                 stamp (out.hash ())));
        out.finish ({{"budget", cfg.optimize.budget}}, "");
        std::cout << "optimize: best TWI " << b.value.objective << " at f = " << b.f_hz << " Hz (f/f0 = "
                  << b.f_hz / cfg.sim.f0 << "), A = " << b.a_deg << " deg after " << res.history.size ()
                  << " evaluations\n";
        return 0;
    }

    // ---------------------------------------------------------- render/midline

    std::string frame_name (const char *prefix, std::size_t i, const char *ext)
    {
        char buf[64];
        std::snprintf (buf, sizeof buf, "%s_%04zu.%s", prefix, i, ext);
        return buf;
    }

    int cmd_render (const Common &c, const std::string &states, std::optional<double> q1, std::optional<double> q2)
    {
        auto cfg = resolve (c);
        std::vector<CurvatureState> qs;
        OutDir out (c, cfg, "render");
        if (!states.empty ())
        {
            if (q1 || q2)
                throw UsageError ("use either --states or --q1/--q2");
            const auto text = read_file (states, "states file");
            out.input ("states", text);
            std::istringstream in (text);
            const auto t = csv::read (in);
            const auto a = t.values ("q1"), b = t.values ("q2");
            for (std::size_t i = 0; i < a.size (); ++i)
                qs.push_back ({a[i], b[i]});
        }
        else if (q1 && q2)
            qs.push_back ({*q1, *q2});
        else
            throw UsageError ("render needs --states or both --q1 and --q2");
        for (std::size_t i = 0; i < qs.size (); ++i)
        {
            std::ostringstream os;
            write_pgm (os, render_silhouette (qs[i], cfg.geometry, ImageSpec{}));
            out.write (frame_name ("frame", i, "pgm"), os.str ());
        }
        out.finish ({{"frames", qs.size ()}}, states.empty () ? "" : " --states <states.csv>");
        std::cout << "render: " << qs.size () << " frame(s) -> " << out.path ().string () << "\n";
        return 0;
    }

    int cmd_midline (const Common &c, const std::vector<std::string> &images, std::optional<int> threshold,
                     int samples)
    {
        auto cfg = resolve (c);
        if (images.empty ())
            throw UsageError ("midline needs at least one --image");
        OutDir out (c, cfg, "midline");
        std::ostringstream fs_;
        csv::Writer fw (fs_, {"index", "q1", "q2", "heading_rms", "position_rms_mm"});
        for (std::size_t i = 0; i < images.size (); ++i)
        {
            const auto text = read_file (images[i], "image");
            out.input (frame_name ("image", i, "pgm"), text);
            std::istringstream in (text);
            const auto img = read_pgm (in);
            const auto cl = extract_midline (binarize (img, threshold), samples);
            std::ostringstream ms;
            write_midline_csv (ms, cl);
            out.write (frame_name ("midline", i, "csv"), ms.str ());
            const auto fit = fit_affine (cl, cfg.geometry.length_mm);
            fw << static_cast<long long> (i) << fit.state.q1 << fit.state.q2 << fit.heading_rms << fit.position_rms;
            fw.end_row ();
        }
        out.write ("fits.csv", fs_.str ());
        out.finish ({{"images", images.size ()}, {"samples", samples}}, " --image <frame.pgm>");
        std::cout << "midline: " << images.size () << " image(s) -> " << out.path ().string () << "\n";
        return 0;
    }

    // ---------------------------------------------------------------- sensors

    int cmd_sensors (const Common &c, const std::vector<int> &channels)
    {
        auto cfg = resolve (c);
        OutDir out (c, cfg, "sensors");
        const auto res = channel_experiment (cfg, channels);
        std::ostringstream cs;
        csv::Writer w (cs, {"channels", "nrmse_q1_pct", "nrmse_q2_pct", "abs_tip_err_mean_mm", "rel_tip_err_pct"});
        Series s1{"NRMSE q1", {}, {}}, s2{"NRMSE q2", {}, {}}, s3{"rel. tip error", {}, {}};
        for (const auto &r : res)
        {
            w << static_cast<long long> (r.channels) << r.report.nrmse_seg1 << r.report.nrmse_seg2
              << r.report.abs_tip_err_mean << r.report.rel_tip_err;
            w.end_row ();
            s1.x.push_back (r.channels);
            s1.y.push_back (r.report.nrmse_seg1);
            s2.x.push_back (r.channels);
            s2.y.push_back (r.report.nrmse_seg2);
            s3.x.push_back (r.channels);
            s3.y.push_back (r.report.rel_tip_err);
            std::cout << "sensors " << r.channels << ": NRMSE " << r.report.nrmse_seg1 << "% / " << r.report.nrmse_seg2
                      << "%, rel tip " << r.report.rel_tip_err << "%\n";
        }
        out.write ("channels.csv", cs.str ());
        const Series all[] = {s1, s2, s3};
        out.write ("channels.svg",
                   svg_line_plot ("Test error vs pressure channel count", "channels", "percent", all, stamp (out.hash ())));
        std::string list;
        for (int ch : channels)
            list += (list.empty () ? "" : ",") + std::to_string (ch);
        out.finish ({{"channels", channels}}, " --channels " + list);
        return 0;
    }

    // ----------------------------------------------------------------- report

    std::vector<fs::path> find_files (const fs::path &root, const std::string &name)
    {
        std::vector<fs::path> out;
        if (fs::exists (root / name))
            out.push_back (root / name);
        std::vector<fs::path> subdirs;
        for (const auto &e : fs::directory_iterator (root))
            if (e.is_directory ())
                subdirs.push_back (e.path ());
        std::sort (subdirs.begin (), subdirs.end ());
        for (const auto &d : subdirs)
            if (fs::exists (d / name))
                out.push_back (d / name);
        return out;
    }

    std::vector<fs::path> find_prefixed (const fs::path &root, const std::string &prefix, const std::string &ext)
    {
        std::vector<fs::path> out;
        std::vector<fs::path> dirs{root};
        for (const auto &e : fs::directory_iterator (root))
            if (e.is_directory ())
                dirs.push_back (e.path ());
        for (const auto &d : dirs)
            for (const auto &e : fs::directory_iterator (d))
            {
                const auto n = e.path ().filename ().string ();
                if (e.is_regular_file () && n.rfind (prefix, 0) == 0 && e.path ().extension () == ext)
                    out.push_back (e.path ());
            }
        std::sort (out.begin (), out.end ());
        return out;
    }

    std::string figure (const std::string &svg) { return "<figure>" + svg + "</figure>"; }

    std::string strip_xml_header (std::string s) { return s; }

    int cmd_report (const Common &c, const std::string &run)
    {
        auto cfg = resolve (c);
        const fs::path root (run);
        if (!fs::is_directory (root))
            throw UsageError ("run directory '" + run + "' does not exist");
        Common cc = c;
        if (cc.out.empty ())
            cc.out = root.string ();
        OutDir out (cc, cfg, "report");
        std::vector<ReportSection> sections;
        const auto st = stamp (out.hash ());

        for (const auto &p : find_files (root, "table.csv"))
        {
            std::ifstream in (p);
            const auto t = [&] {
                std::ostringstream ss;
                ss << in.rdbuf ();
                return ss.str ();
            }();
            std::istringstream lines (t);
            std::string line, html = "<table>";
            bool head = true;
            while (std::getline (lines, line))
            {
                if (line.empty ())
                    continue;
                html += "<tr>";
                std::istringstream cells (line);
                std::string cell;
                while (std::getline (cells, cell, ','))
                    html += (head ? "<th>" : "<td>") + xml_escape (cell) + (head ? "</th>" : "</td>");
                html += "</tr>";
                head = false;
            }
            html += "</table>";
            sections.push_back ({"Reconstruction errors (" + p.parent_path ().filename ().string () + ")", html});
        }
        std::string overlays;
        for (const auto &p : find_prefixed (root, "overlay_", ".svg"))
            overlays += figure (read_file (p, "overlay"));
        if (!overlays.empty ())
            sections.push_back ({"Reconstructed centerlines", overlays});

        for (const auto &p : find_files (root, "metrics.csv"))
        {
            std::ifstream in (p);
            const auto t = csv::read (in, {"f_ratio", "f_hz", "A_deg", "thrust_mN", "tip_defl_deg", "twi"});
            std::vector<PointMetrics> rows;
            std::vector<double> amps;
            for (const auto &r : t.rows)
            {
                PointMetrics pm;
                pm.f_ratio = r[0];
                pm.f_hz = r[1];
                pm.a_deg = r[2];
                pm.thrust_mN = r[3];
                pm.tip_defl_deg = r[4];
                pm.twi = r[5];
                rows.push_back (pm);
                if (std::find (amps.begin (), amps.end (), pm.a_deg) == amps.end ())
                    amps.push_back (pm.a_deg);
            }
            const std::string tag = p.parent_path ().filename ().string ();
            sections.push_back (
                {"Metric curves (" + tag + ")",
                 figure (svg_line_plot ("Thrust proxy", "f / f0", "thrust (mN)",
                                        curves (rows, &PointMetrics::thrust_mN, amps), st)) +
                     figure (svg_line_plot ("Tip deflection", "f / f0", "deflection (deg)",
                                            curves (rows, &PointMetrics::tip_defl_deg, amps), st)) +
                     figure (svg_line_plot ("Traveling wave index", "f / f0", "TWI",
                                            curves (rows, &PointMetrics::twi, amps), st))});
        }
        for (const auto &p : find_files (root, "modes.svg"))
            sections.push_back ({"Mode snapshots (" + p.parent_path ().filename ().string () + ")",
                                 figure (read_file (p, "mode plot"))});
        for (const auto &p : find_files (root, "history.svg"))
            sections.push_back ({"Optimization history", figure (read_file (p, "history plot"))});
        for (const auto &p : find_files (root, "channels.svg"))
            sections.push_back ({"Channel count", figure (read_file (p, "channel plot"))});
        std::vector<Series> losses;
        for (const auto &p : find_prefixed (root, "loss_", ".csv"))
        {
            std::ifstream in (p);
            const auto t = csv::read (in, {"epoch", "loss"});
            losses.push_back ({p.stem ().string (), t.values ("epoch"), t.values ("loss")});
        }
        if (!losses.empty ())
            sections.push_back ({"Training loss", figure (svg_line_plot ("Training loss", "epoch",
                                                                         "mean squared error (normalized)", losses, st))});
        if (sections.empty ())
            throw UsageError ("no run artifacts found under '" + run + "'");
        out.write ("report.html", html_report ("Tentacle run report", sections, st));
        out.finish ({{"sections", sections.size ()}}, " --run <dir>");
        std::cout << "report: " << sections.size () << " section(s) -> " << (out.path () / "report.html").string ()
                  << "\n";
        return 0;
    }

} // namespace

int main (int argc, char **argv)
{
    CLI::App app{"Soft tentacle proprioception and swimming-metric pipeline"};
    app.require_subcommand (1);

    Common c_dataset, c_train, c_eval, c_metrics, c_opt, c_render, c_mid, c_report, c_sensors;

    auto *dataset = app.add_subcommand ("dataset", "Simulate ramp runs and write train/test CSVs");
    add_common (dataset, c_dataset);
    std::optional<double> duration, split;
    dataset->add_option ("--duration", duration, "Training run length (s)");
    dataset->add_option ("--split", split, "Held-out test run length (s)");

    auto *train_cmd = app.add_subcommand ("train", "Fit the bidirectional LSTM regressor");
    add_common (train_cmd, c_train);
    std::string data, target = "both";
    std::optional<int> epochs;
    train_cmd->add_option ("--data", data, "Training CSV or dataset directory")->required ();
    train_cmd->add_option ("--target", target, "affine | polynomial | both");
    train_cmd->add_option ("--epochs", epochs, "Override the configured epoch count");

    auto *eval_cmd = app.add_subcommand ("eval", "Reconstruction error report and centerline overlays");
    add_common (eval_cmd, c_eval);
    std::vector<std::string> weights;
    std::string test, predictions, eval_target;
    int snapshots = 6;
    eval_cmd->add_option ("--weights", weights, "Weights JSON (repeatable)");
    eval_cmd->add_option ("--test", test, "Test CSV or dataset directory");
    eval_cmd->add_option ("--predictions", predictions, "CSV t,pred1,pred2,true1,true2 to score directly");
    eval_cmd->add_option ("--target", eval_target, "Target kind of --predictions");
    eval_cmd->add_option ("--snapshots", snapshots, "Overlay instants per target");

    auto *metrics_cmd = app.add_subcommand ("metrics", "Thrust, tip deflection and TWI over an (f, A) sweep");
    add_common (metrics_cmd, c_metrics);
    std::string m_weights, m_trace;
    std::optional<double> frequency;
    metrics_cmd->add_option ("--weights", m_weights, "Affine weights: metrics from reconstructed states");
    metrics_cmd->add_option ("--trace", m_trace, "Single trace CSV instead of the sweep");
    metrics_cmd->add_option ("--frequency", frequency, "Actuation frequency of --trace (Hz)");

    auto *opt_cmd = app.add_subcommand ("optimize", "Bayesian optimization of TWI over (f, A)");
    add_common (opt_cmd, c_opt);
    std::optional<int> budget;
    opt_cmd->add_option ("--budget", budget, "Number of objective evaluations");

    auto *render_cmd = app.add_subcommand ("render", "Synthetic silhouettes (PGM) from curvature states");
    add_common (render_cmd, c_render);
    std::string states;
    std::optional<double> q1, q2;
    render_cmd->add_option ("--states", states, "CSV with q1,q2 columns");
    render_cmd->add_option ("--q1", q1, "Single state, q1 (rad)");
    render_cmd->add_option ("--q2", q2, "Single state, q2 (rad)");

    auto *mid_cmd = app.add_subcommand ("midline", "Midline CSV and affine fit from PGM silhouettes");
    add_common (mid_cmd, c_mid);
    std::vector<std::string> images;
    std::optional<int> threshold;
    int samples = 200;
    mid_cmd->add_option ("--image", images, "PGM image (repeatable)");
    mid_cmd->add_option ("--threshold", threshold, "Fixed threshold in [1, 255] (default: Otsu)");
    mid_cmd->add_option ("--samples", samples, "Midline samples");

    auto *report_cmd = app.add_subcommand ("report", "HTML summary of a run directory");
    add_common (report_cmd, c_report);
    std::string run;
    report_cmd->add_option ("--run", run, "Run directory holding command outputs")->required ();

    auto *sensors_cmd = app.add_subcommand ("sensors", "Test error against the number of pressure channels");
    add_common (sensors_cmd, c_sensors);
    std::vector<int> channels{1, 2, 3, 4};
    sensors_cmd->add_option ("--channels", channels, "Channel counts in [1, 4]")->delimiter (',');

    try
    {
        app.parse (argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        return app.exit (e) == 0 ? 0 : 1;
    }

    try
    {
        if (dataset->parsed ())
            return cmd_dataset (c_dataset, duration, split);
        if (train_cmd->parsed ())
            return cmd_train (c_train, data, target, epochs);
        if (eval_cmd->parsed ())
            return cmd_eval (c_eval, weights, test, predictions, eval_target, snapshots);
        if (metrics_cmd->parsed ())
            return cmd_metrics (c_metrics, m_weights, m_trace, frequency);
        if (opt_cmd->parsed ())
            return cmd_optimize (c_opt, budget);
        if (render_cmd->parsed ())
            return cmd_render (c_render, states, q1, q2);
        if (mid_cmd->parsed ())
            return cmd_midline (c_mid, images, threshold, samples);
        if (report_cmd->parsed ())
            return cmd_report (c_report, run);
        if (sensors_cmd->parsed ())
            return cmd_sensors (c_sensors, channels);
    }
    catch (const ConfigError &e)
    {
        std::cerr << "config error: " << e.what () << "\n";
        return 1;
    }
    catch (const UsageError &e)
    {
        std::cerr << "error: " << e.what () << "\n";
        return 1;
    }
    catch (const std::exception &e)
    {
        std::cerr << "runtime error: " << e.what () << "\n";
        return 2;
    }
    return 1;
}
