#ifndef MGDP_IPM_HPP
#define MGDP_IPM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace mgdp::ipm {

using SparseMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

enum class ExitCode
{
    Optimal,
    OptimalInaccurate,
    PrimalInfeasible,
    PrimalInfeasibleInaccurate,
    DualInfeasible,
    DualInfeasibleInaccurate,
    MaxIterations,
    Numerics,
    Fatal
};

struct Settings
{
    double feastol = 1e-8;
    double abstol = 1e-8;
    double reltol = 1e-8;
    double feastol_inacc = 1e-4;
    double abstol_inacc = 5e-5;
    double reltol_inacc = 5e-5;
    std::size_t max_iters = 100;
    std::size_t nitref = 9;        // iterative refinement steps
    double irerrfact = 6.0;        // stop refining when error shrinks slower than this
    double linsysacc = 1e-14;      // refinement target accuracy
    double deltastat = 7e-8;       // static KKT regularization
    double gamma = 0.99;           // step scaling
    double stepmin = 1e-6;
    double stepmax = 0.999;
    double sigmamin = 1e-4;
    double sigmamax = 1.0;
    double safeguard = 500.0;      // bail out when pres degrades by this factor
    std::size_t equil_iters = 3;
};

struct Information
{
    double pcost = 0.0;
    double dcost = 0.0;
    double pres = 0.0;
    double dres = 0.0;
    double gap = 0.0;
    std::optional<double> relgap;
    std::optional<double> pinfres;
    std::optional<double> dinfres;
    double mu = 0.0;
    double kapovert = 0.0;
    double step = 0.0;
    double sigma = 0.0;
    std::size_t iter = 0;

    // Lexicographic-ish quality comparison used by the safeguard logic.
    bool better_than(const Information &o) const
    {
        if (pinfres.has_value() && kapovert > 1.0)
            return gap > 0.0 && o.gap > 0.0 && gap < o.gap &&
                   *pinfres > 0.0 && *pinfres < o.pres && mu > 0.0 && mu < o.mu;
        return gap > 0.0 && o.gap > 0.0 && gap < o.gap && pres > 0.0 && pres < o.pres &&
               dres > 0.0 && dres < o.dres && kapovert > 0.0 && kapovert < o.kapovert &&
               mu > 0.0 && mu < o.mu;
    }
};

/**
 * Primal-dual interior point solver for
 *
 *     min  c'x   s.t.  A x = b,  G x + s = h,  s in K,
 *
 * with K a product of a nonnegative orthant of dimension `n_nonneg` followed
 * by second-order cones of the given dimensions. Follows the homogeneous
 * self-dual embedding with Nesterov-Todd scalings; second-order cone scaling
 * blocks are stored in the sparse low-rank expanded form, adding two extra
 * rows per cone to the KKT system.
 */
class Solver
{
public:
    Solver(SparseMat G, SparseMat A, Vec c, Vec h, Vec b,
           std::size_t n_nonneg, std::vector<std::size_t> soc_dims,
           Settings settings = {})
        : settings_(settings),
          G_(std::move(G)),
          A_(std::move(A)),
          c_(std::move(c)),
          h_(std::move(h)),
          b_(std::move(b)),
          n_lc_(n_nonneg)
    {
        n_var_ = static_cast<std::size_t>(c_.size());
        n_eq_ = static_cast<std::size_t>(A_.rows());
        n_ineq_ = static_cast<std::size_t>(G_.rows());

        so_cones_.resize(soc_dims.size());
        std::size_t soc_total = 0;
        for (std::size_t i = 0; i < soc_dims.size(); ++i)
        {
            so_cones_[i].dim = soc_dims[i];
            soc_total += soc_dims[i];
        }
        dim_K_ = n_var_ + n_eq_ + n_ineq_ + 2 * so_cones_.size();

        equilibrate();
        Gt_ = SparseMat(G_.transpose());
        At_ = SparseMat(A_.transpose());
        setup_kkt();
        ldlt_.analyzePattern(K_);
    }

    ExitCode solve()
    {
        reset_kkt_scalings();

        Vec rhs1 = Vec::Zero(dim_K_);
        rhs1.segment(n_var_, n_eq_) = b_;
        scatter_cone_rows(h_, rhs1);
        Vec rhs2 = Vec::Zero(dim_K_);
        rhs2.head(n_var_) = -c_;

        resx0_ = std::max(1.0, c_.norm());
        resy0_ = std::max(1.0, b_.norm());
        resz0_ = std::max(1.0, h_.norm());

        ldlt_.factorize(K_);
        if (ldlt_.info() != Eigen::Success)
            return finish(ExitCode::Fatal);

        // Initial primal guess: argmin ||Gx - h|| s.t. Ax = b; slack brought
        // into the cone interior. Dual guess analogous.
        Vec dx1(n_var_), dy1(n_eq_), dz1(n_ineq_);
        solve_kkt(rhs1, dx1, dy1, dz1, true);
        x_ = dx1;
        bring_to_cone(Vec(-dz1), s_);

        Vec dx2(n_var_), dy2(n_eq_), dz2(n_ineq_);
        solve_kkt(rhs2, dx2, dy2, dz2, true);
        y_ = dy2;
        bring_to_cone(dz2, z_);

        rhs1.head(n_var_) = -c_;

        lambda_.resize(n_ineq_);
        W_times_dzaff_.resize(n_ineq_);
        dsaff_by_W_.resize(n_ineq_);
        dsaff_.resize(n_ineq_);
        kap_ = 1.0;
        tau_ = 1.0;
        info_ = Information{};

        double pres_prev = std::numeric_limits<double>::max();
        ExitCode code = ExitCode::Fatal;
        Best best;

        for (info_.iter = 0; info_.iter <= settings_.max_iters; ++info_.iter)
        {
            compute_residuals();
            update_statistics();

            if (info_.iter > 0 &&
                (info_.pres > settings_.safeguard * pres_prev || info_.gap < 0.0))
            {
                restore_best(best);
                code = check_exit(true);
                if (code == ExitCode::Fatal)
                    code = ExitCode::Numerics;
                break;
            }
            pres_prev = info_.pres;

            code = check_exit(false);
            if (code != ExitCode::Fatal)
                break;

            if (info_.iter > 0 && info_.step == settings_.stepmin * settings_.gamma)
            {
                restore_best(best);
                code = check_exit(true);
                if (code == ExitCode::Fatal)
                    code = ExitCode::Numerics;
                break;
            }
            if (info_.iter == settings_.max_iters)
            {
                if (!info_.better_than(best.info))
                    restore_best(best);
                code = check_exit(true);
                if (code == ExitCode::Fatal)
                    code = ExitCode::MaxIterations;
                break;
            }
            if (std::isnan(info_.pcost))
            {
                if (info_.iter > 0 && !info_.better_than(best.info))
                {
                    restore_best(best);
                    code = check_exit(true);
                    if (code == ExitCode::Fatal)
                        code = ExitCode::Numerics;
                }
                else
                {
                    code = ExitCode::Numerics;
                }
                break;
            }

            if (info_.iter == 0 || info_.better_than(best.info))
                save_best(best);

            if (!update_scalings())
            {
                restore_best(best);
                code = check_exit(true);
                if (code == ExitCode::Fatal)
                    code = ExitCode::Numerics;
                break;
            }
            update_kkt_scalings();
            ldlt_.factorize(K_);
            if (ldlt_.info() != Eigen::Success)
            {
                code = ExitCode::Fatal;
                break;
            }

            solve_kkt(rhs1, dx1, dy1, dz1, false);

            // Affine (predictor) direction.
            rhs_affine(rhs2);
            solve_kkt(rhs2, dx2, dy2, dz2, false);

            const double dtau_denom =
                kap_ / tau_ - c_.dot(dx1) - dot_b(dy1) - h_.dot(dz1);
            const double dtauaff =
                (rt_ - kap_ + c_.dot(dx2) + dot_b(dy2) + h_.dot(dz2)) / dtau_denom;

            dz2 += dtauaff * dz1;
            scale(dz2, W_times_dzaff_);
            dsaff_by_W_ = -W_times_dzaff_ - lambda_;
            const double dkapaff = -kap_ - kap_ / tau_ * dtauaff;

            const double step_aff =
                line_search(dsaff_by_W_, W_times_dzaff_, tau_, dtauaff, kap_, dkapaff);

            const double sigma =
                std::clamp(std::pow(1.0 - step_aff, 3), settings_.sigmamin, settings_.sigmamax);
            info_.sigma = sigma;

            // Combined (corrector) direction.
            rhs_combined(rhs2);
            solve_kkt(rhs2, dx2, dy2, dz2, false);

            const double bkap = kap_ * tau_ + dkapaff * dtauaff - sigma * info_.mu;
            const double dtau = ((1.0 - sigma) * rt_ - bkap / tau_ + c_.dot(dx2) +
                                 dot_b(dy2) + h_.dot(dz2)) /
                                dtau_denom;

            dx2 += dtau * dx1;
            dy2 += dtau * dy1;
            dz2 += dtau * dz1;

            scale(dz2, W_times_dzaff_);
            dsaff_by_W_ = -(dsaff_by_W_ + W_times_dzaff_);
            const double dkap = -(bkap + kap_ * dtau) / tau_;

            info_.step = settings_.gamma *
                         line_search(dsaff_by_W_, W_times_dzaff_, tau_, dtau, kap_, dkap);

            scale(dsaff_by_W_, dsaff_);

            x_ += info_.step * dx2;
            y_ += info_.step * dy2;
            z_ += info_.step * dz2;
            s_ += info_.step * dsaff_;
            kap_ += info_.step * dkap;
            tau_ += info_.step * dtau;
        }

        return finish(code);
    }

    const Vec &x() const { return x_; }
    const Vec &y() const { return y_; }
    const Vec &z() const { return z_; }
    const Vec &s() const { return s_; }
    const Information &info() const { return info_; }

private:
    struct LpCone
    {
        Vec v;  // scaling squared
        Vec w;  // scaling
    };

    struct SoCone
    {
        std::size_t dim = 0;
        Vec q;  // normalized NT point, tail
        double a = 0.0;
        double eta = 0.0;
        double eta_square = 0.0;
        double w = 0.0;
        double d1 = 0.0;
        double u0 = 0.0;
        double u1 = 0.0;
        double v1 = 0.0;
    };

    struct Best
    {
        Vec x, y, z, s;
        double kap = 1.0, tau = 1.0;
        Information info;
        bool set = false;
    };

    // ----- setup ----------------------------------------------------------

    static void max_rows(Vec &e, const SparseMat &m)
    {
        for (int j = 0; j < m.outerSize(); ++j)
            for (SparseMat::InnerIterator it(m, j); it; ++it)
                e(it.row()) = std::max(std::abs(it.value()), e(it.row()));
    }
    static void max_cols(Vec &e, const SparseMat &m)
    {
        for (int j = 0; j < m.outerSize(); ++j)
            for (SparseMat::InnerIterator it(m, j); it; ++it)
                e(j) = std::max(std::abs(it.value()), e(j));
    }
    static void div_rows(const Vec &e, SparseMat &m)
    {
        for (int j = 0; j < m.outerSize(); ++j)
            for (SparseMat::InnerIterator it(m, j); it; ++it)
                it.valueRef() /= e(it.row());
    }
    static void div_cols(const Vec &e, SparseMat &m)
    {
        for (int j = 0; j < m.outerSize(); ++j)
            for (SparseMat::InnerIterator it(m, j); it; ++it)
                it.valueRef() /= e(j);
    }

    void equilibrate()
    {
        x_equil_ = Vec::Ones(n_var_);
        A_equil_ = Vec::Ones(n_eq_);
        G_equil_ = Vec::Ones(n_ineq_);

        Vec xt(n_var_), at(n_eq_), gt(n_ineq_);
        for (std::size_t iter = 0; iter < settings_.equil_iters; ++iter)
        {
            xt.setZero();
            at.setZero();
            gt.setZero();
            max_cols(xt, A_);
            max_cols(xt, G_);
            max_rows(at, A_);
            max_rows(gt, G_);

            // Rows of one cone must share a common scaling.
            std::size_t ind = n_lc_;
            for (const SoCone &sc : so_cones_)
            {
                const double total = gt.segment(ind, sc.dim).sum();
                gt.segment(ind, sc.dim).setConstant(total);
                ind += sc.dim;
            }

            auto sqrt_or_one = [](double v) { return std::abs(v) < 1e-6 ? 1.0 : std::sqrt(v); };
            xt = xt.unaryExpr(sqrt_or_one);
            at = at.unaryExpr(sqrt_or_one);
            gt = gt.unaryExpr(sqrt_or_one);

            div_rows(at, A_);
            div_rows(gt, G_);
            div_cols(xt, A_);
            div_cols(xt, G_);

            x_equil_ = x_equil_.cwiseProduct(xt);
            A_equil_ = A_equil_.cwiseProduct(at);
            G_equil_ = G_equil_.cwiseProduct(gt);
        }

        c_ = c_.cwiseQuotient(x_equil_);
        b_ = b_.cwiseQuotient(A_equil_);
        h_ = h_.cwiseQuotient(G_equil_);
    }

    // KKT layout: [x (n_var)] [y (n_eq)] [z rows: lp, then per cone dim+2].
    void setup_kkt()
    {
        K_.resize(static_cast<Eigen::Index>(dim_K_), static_cast<Eigen::Index>(dim_K_));
        std::vector<Eigen::Triplet<double>> trip;

        for (std::size_t k = 0; k < n_var_; ++k)
            trip.emplace_back(k, k, settings_.deltastat);
        for (std::size_t k = n_var_; k < n_var_ + n_eq_; ++k)
            trip.emplace_back(k, k, -settings_.deltastat);

        // A' in block (1,2)
        for (int col = 0; col < At_.outerSize(); ++col)
            for (SparseMat::InnerIterator it(At_, col); it; ++it)
                trip.emplace_back(it.row(), static_cast<int>(n_var_) + col, it.value());

        // G' in block (1,3), skipping the two expansion columns of each cone
        {
            std::size_t col_K = n_var_ + n_eq_;
            std::size_t col_Gt = 0;
            for (std::size_t col = 0; col < n_lc_; ++col, ++col_Gt, ++col_K)
                for (SparseMat::InnerIterator it(Gt_, static_cast<int>(col_Gt)); it; ++it)
                    trip.emplace_back(it.row(), static_cast<int>(col_K), it.value());
            for (const SoCone &sc : so_cones_)
            {
                for (std::size_t col = 0; col < sc.dim; ++col, ++col_Gt, ++col_K)
                    for (SparseMat::InnerIterator it(Gt_, static_cast<int>(col_Gt)); it; ++it)
                        trip.emplace_back(it.row(), static_cast<int>(col_K), it.value());
                col_K += 2;
            }
        }

        // -V in block (3,3); upper triangle only
        {
            std::size_t diag = n_var_ + n_eq_;
            for (std::size_t k = 0; k < n_lc_; ++k, ++diag)
                trip.emplace_back(diag, diag, -1.0);
            for (const SoCone &sc : so_cones_)
            {
                for (std::size_t k = 0; k < sc.dim; ++k, ++diag)
                    trip.emplace_back(diag, diag, -1.0);
                // expansion column 1: diagonal and v-vector
                trip.emplace_back(diag, diag, -1.0);
                for (std::size_t k = 1; k < sc.dim; ++k)
                    trip.emplace_back(diag - sc.dim + k, diag, 0.0);
                ++diag;
                // expansion column 2: diagonal and u-vector
                trip.emplace_back(diag, diag, 1.0);
                for (std::size_t k = 0; k < sc.dim; ++k)
                    trip.emplace_back(diag - sc.dim - 1 + k, diag, 0.0);
                ++diag;
            }
        }

        K_.setFromTriplets(trip.begin(), trip.end());
        K_.makeCompressed();
        cache_indices();
    }

    void cache_indices()
    {
        kkt_V_ptr_.clear();
        std::size_t diag = n_var_ + n_eq_;
        for (std::size_t k = 0; k < n_lc_; ++k, ++diag)
            kkt_V_ptr_.push_back(&K_.coeffRef(diag, diag));
        for (const SoCone &sc : so_cones_)
        {
            for (std::size_t k = 0; k < sc.dim; ++k, ++diag)
                kkt_V_ptr_.push_back(&K_.coeffRef(diag, diag));
            kkt_V_ptr_.push_back(&K_.coeffRef(diag, diag));
            for (std::size_t k = 1; k < sc.dim; ++k)
                kkt_V_ptr_.push_back(&K_.coeffRef(diag - sc.dim + k, diag));
            ++diag;
            kkt_V_ptr_.push_back(&K_.coeffRef(diag, diag));
            for (std::size_t k = 0; k < sc.dim; ++k)
                kkt_V_ptr_.push_back(&K_.coeffRef(diag - sc.dim - 1 + k, diag));
            ++diag;
        }
    }

    void reset_kkt_scalings()
    {
        std::size_t i = 0;
        for (std::size_t k = 0; k < n_lc_; ++k)
            *kkt_V_ptr_[i++] = -1.0;
        for (const SoCone &sc : so_cones_)
        {
            for (std::size_t k = 0; k < sc.dim; ++k)
                *kkt_V_ptr_[i++] = -1.0;
            *kkt_V_ptr_[i++] = -1.0;
            for (std::size_t k = 1; k < sc.dim; ++k)
                *kkt_V_ptr_[i++] = 0.0;
            *kkt_V_ptr_[i++] = 1.0;
            for (std::size_t k = 0; k < sc.dim; ++k)
                *kkt_V_ptr_[i++] = 0.0;
        }
    }

    void update_kkt_scalings()
    {
        std::size_t i = 0;
        for (std::size_t k = 0; k < n_lc_; ++k)
            *kkt_V_ptr_[i++] = -lp_cone_.v(k) - settings_.deltastat;
        for (const SoCone &sc : so_cones_)
        {
            *kkt_V_ptr_[i++] = -sc.eta_square * sc.d1 - settings_.deltastat;
            for (std::size_t k = 1; k < sc.dim; ++k)
                *kkt_V_ptr_[i++] = -sc.eta_square - settings_.deltastat;
            *kkt_V_ptr_[i++] = -sc.eta_square;
            for (std::size_t k = 1; k < sc.dim; ++k)
                *kkt_V_ptr_[i++] = -sc.eta_square * sc.v1 * sc.q(k - 1);
            *kkt_V_ptr_[i++] = sc.eta_square + settings_.deltastat;
            *kkt_V_ptr_[i++] = -sc.eta_square * sc.u0;
            for (std::size_t k = 1; k < sc.dim; ++k)
                *kkt_V_ptr_[i++] = -sc.eta_square * sc.u1 * sc.q(k - 1);
        }
    }

    // ----- cone algebra ----------------------------------------------------

    // Copies a cone-sized vector into the tail of a KKT-sized vector, leaving
    // the two expansion slots of each cone untouched.
    void scatter_cone_rows(const Vec &src, Vec &dst) const
    {
        dst.segment(n_var_ + n_eq_, n_lc_) = src.head(n_lc_);
        std::size_t si = n_lc_;
        std::size_t di = n_var_ + n_eq_ + n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            dst.segment(di, sc.dim) = src.segment(si, sc.dim);
            si += sc.dim;
            di += sc.dim + 2;
        }
    }

    void gather_cone_rows(const Vec &src, Vec &dst) const
    {
        dst.head(n_lc_) = src.segment(n_var_ + n_eq_, n_lc_);
        std::size_t di = n_lc_;
        std::size_t si = n_var_ + n_eq_ + n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            dst.segment(di, sc.dim) = src.segment(si, sc.dim);
            di += sc.dim;
            si += sc.dim + 2;
        }
    }

    void bring_to_cone(const Vec &r, Vec &s) const
    {
        double alpha = -settings_.gamma;
        for (std::size_t i = 0; i < n_lc_; ++i)
            if (r(i) <= 0.0 && -r(i) > alpha)
                alpha = -r(i);
        std::size_t start = n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            const double cres = r(start) - r.segment(start + 1, sc.dim - 1).norm();
            if (cres <= 0.0 && -cres > alpha)
                alpha = -cres;
            start += sc.dim;
        }
        alpha += 1.0;
        s = r;
        s.head(n_lc_).array() += alpha;
        start = n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            s(start) += alpha;
            start += sc.dim;
        }
    }

    bool update_scalings()
    {
        lp_cone_.v = s_.head(n_lc_).cwiseQuotient(z_.head(n_lc_));
        lp_cone_.w = lp_cone_.v.cwiseSqrt();

        std::size_t start = n_lc_;
        for (SoCone &sc : so_cones_)
        {
            const double sres =
                s_(start) * s_(start) - s_.segment(start + 1, sc.dim - 1).squaredNorm();
            const double zres =
                z_(start) * z_(start) - z_.segment(start + 1, sc.dim - 1).squaredNorm();
            if (sres <= 0.0 || zres <= 0.0)
                return false;

            const double snorm = std::sqrt(sres);
            const double znorm = std::sqrt(zres);
            const Vec skbar = s_.segment(start, sc.dim) / snorm;
            const Vec zkbar = z_.segment(start, sc.dim) / znorm;
            sc.eta_square = snorm / znorm;
            sc.eta = std::sqrt(sc.eta_square);

            double gamma = std::sqrt(0.5 * (1.0 + skbar.dot(zkbar)));
            sc.a = (0.5 / gamma) * (skbar(0) + zkbar(0));
            sc.q = (0.5 / gamma) * (skbar.tail(sc.dim - 1) - zkbar.tail(sc.dim - 1));
            sc.w = sc.q.squaredNorm();

            const double cc = (1.0 + sc.a) + sc.w / (1.0 + sc.a);
            const double dd = 1.0 + 2.0 / (1.0 + sc.a) + sc.w / ((1.0 + sc.a) * (1.0 + sc.a));
            const double d1 =
                std::max(0.0, 0.5 * (sc.a * sc.a + sc.w * (1.0 - (cc * cc) / (1.0 + sc.w * dd))));
            const double u0_square = sc.a * sc.a + sc.w - d1;
            const double c2byu02 = (cc * cc) / u0_square;
            if (c2byu02 - dd <= 0.0)
                return false;
            sc.d1 = d1;
            sc.u0 = std::sqrt(u0_square);
            sc.u1 = std::sqrt(c2byu02);
            sc.v1 = std::sqrt(c2byu02 - dd);

            start += sc.dim;
        }
        scale(z_, lambda_);
        return true;
    }

    // lambda = W z
    void scale(const Vec &z, Vec &lambda) const
    {
        lambda.head(n_lc_) = lp_cone_.w.cwiseProduct(z.head(n_lc_));
        std::size_t start = n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            const double zeta = sc.q.dot(z.segment(start + 1, sc.dim - 1));
            const double factor = z(start) + zeta / (1.0 + sc.a);
            lambda(start) = sc.eta * (sc.a * z(start) + zeta);
            lambda.segment(start + 1, sc.dim - 1) =
                sc.eta * (z.segment(start + 1, sc.dim - 1) + factor * sc.q);
            start += sc.dim;
        }
    }

    // y += W^2 x over the expanded block (x, y are KKT-tail sized)
    void scale2add(const Vec &x, Vec &y) const
    {
        y.head(n_lc_) += lp_cone_.v.cwiseProduct(x.head(n_lc_));
        std::size_t start = n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            const std::size_t i1 = start;
            const std::size_t i2 = i1 + 1;
            const std::size_t i3 = i2 + sc.dim - 1;
            const std::size_t i4 = i3 + 1;
            y(i1) += sc.eta_square * (sc.d1 * x(i1) + sc.u0 * x(i4));
            const double v1x3_plus_u1x4 = sc.v1 * x(i3) + sc.u1 * x(i4);
            y.segment(i2, sc.dim - 1) +=
                sc.eta_square * (x.segment(i2, sc.dim - 1) + v1x3_plus_u1x4 * sc.q);
            const double qtx2 = sc.q.dot(x.segment(i2, sc.dim - 1));
            y(i3) += sc.eta_square * (sc.v1 * qtx2 + x(i3));
            y(i4) += sc.eta_square * (sc.u0 * x(i1) + sc.u1 * qtx2 - x(i4));
            start += sc.dim + 2;
        }
    }

    // w = u o v, returns sum |w_cone0| for mu computation
    void conic_product(const Vec &u, const Vec &v, Vec &w) const
    {
        w.head(n_lc_) = u.head(n_lc_).cwiseProduct(v.head(n_lc_));
        std::size_t start = n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            w(start) = u.segment(start, sc.dim).dot(v.segment(start, sc.dim));
            w.segment(start + 1, sc.dim - 1) =
                u(start) * v.segment(start + 1, sc.dim - 1) +
                v(start) * u.segment(start + 1, sc.dim - 1);
            start += sc.dim;
        }
    }

    // v = u \ w (inverse of the Jordan product)
    void conic_division(const Vec &u, const Vec &w, Vec &v) const
    {
        v.head(n_lc_) = w.head(n_lc_).cwiseQuotient(u.head(n_lc_));
        std::size_t start = n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            const double u0 = u(start);
            const double w0 = w(start);
            const double rho = u0 * u0 - u.segment(start + 1, sc.dim - 1).squaredNorm();
            const double zeta =
                u.segment(start + 1, sc.dim - 1).dot(w.segment(start + 1, sc.dim - 1));
            const double factor = (zeta / u0 - w0) / rho;
            v(start) = (u0 * w0 - zeta) / rho;
            v.segment(start + 1, sc.dim - 1) =
                factor * u.segment(start + 1, sc.dim - 1) +
                w.segment(start + 1, sc.dim - 1) / u0;
            start += sc.dim;
        }
    }

    double line_search(const Vec &ds, const Vec &dz, double tau, double dtau, double kap,
                       double dkap) const
    {
        double alpha = 10.0;
        if (n_lc_ > 0)
        {
            const double rhomin = (ds.head(n_lc_).cwiseQuotient(lambda_.head(n_lc_))).minCoeff();
            const double sigmamin = (dz.head(n_lc_).cwiseQuotient(lambda_.head(n_lc_))).minCoeff();
            constexpr double eps = 1e-13;
            if (-sigmamin > -rhomin)
                alpha = sigmamin < 0.0 ? 1.0 / (-sigmamin) : 1.0 / eps;
            else
                alpha = rhomin < 0.0 ? 1.0 / (-rhomin) : 1.0 / eps;
        }

        const double mtbdt = -tau / dtau;
        const double mkbdk = -kap / dkap;
        if (mtbdt > 0.0 && mtbdt < alpha)
            alpha = mtbdt;
        if (mkbdk > 0.0 && mkbdk < alpha)
            alpha = mkbdk;

        std::size_t start = n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            const double lknorm2 =
                lambda_(start) * lambda_(start) -
                lambda_.segment(start + 1, sc.dim - 1).squaredNorm();
            if (lknorm2 <= 0.0)
            {
                start += sc.dim;
                continue;
            }
            const double lknorm = std::sqrt(lknorm2);
            Vec lkbar = lambda_.segment(start, sc.dim) / lknorm;
            const double lknorminv = 1.0 / lknorm;

            const double lkbar_ds =
                lkbar(0) * ds(start) -
                lkbar.tail(sc.dim - 1).dot(ds.segment(start + 1, sc.dim - 1));
            const double lkbar_dz =
                lkbar(0) * dz(start) -
                lkbar.tail(sc.dim - 1).dot(dz.segment(start + 1, sc.dim - 1));

            Vec rho(sc.dim);
            rho(0) = lknorminv * lkbar_ds;
            double factor = (lkbar_ds + ds(start)) / (lkbar(0) + 1.0);
            rho.tail(sc.dim - 1) =
                lknorminv *
                (ds.segment(start + 1, sc.dim - 1) - factor * lkbar.tail(sc.dim - 1));
            const double rhonorm = rho.tail(sc.dim - 1).norm() - rho(0);

            Vec sig(sc.dim);
            sig(0) = lknorminv * lkbar_dz;
            factor = (lkbar_dz + dz(start)) / (lkbar(0) + 1.0);
            sig.tail(sc.dim - 1) =
                lknorminv *
                (dz.segment(start + 1, sc.dim - 1) - factor * lkbar.tail(sc.dim - 1));
            const double signorm = sig.tail(sc.dim - 1).norm() - sig(0);

            const double conic_step = std::max(0.0, std::max(signorm, rhonorm));
            if (conic_step != 0.0)
                alpha = std::min(1.0 / conic_step, alpha);
            start += sc.dim;
        }

        return std::clamp(alpha, settings_.stepmin, settings_.stepmax);
    }

    // ----- KKT solve with iterative refinement -----------------------------

    std::size_t solve_kkt(const Vec &rhs, Vec &dx, Vec &dy, Vec &dz, bool initialize)
    {
        Vec x = ldlt_.solve(rhs);
        const double error_threshold =
            (1.0 + rhs.lpNorm<Eigen::Infinity>()) * settings_.linsysacc;

        const std::size_t mtilde = n_ineq_ + 2 * so_cones_.size();
        const auto bx = rhs.head(n_var_);
        const auto by = rhs.segment(n_var_, n_eq_);
        const auto bz = rhs.tail(mtilde);

        double nerr_prev = std::numeric_limits<double>::max();
        Vec correction(dim_K_);
        Vec ex(n_var_), ey(n_eq_), ez(mtilde), Gdx(n_ineq_);
        std::size_t k_ref;
        for (k_ref = 0; k_ref <= settings_.nitref; ++k_ref)
        {
            gather_cone_rows(x, dz);
            const auto dxv = x.head(n_var_);
            const auto dyv = x.segment(n_var_, n_eq_);

            // Residual of the exact (unregularized) expanded system.
            ex = bx - Gt_ * dz;
            if (n_eq_ > 0)
                ex -= At_ * dyv;
            const double nex = ex.lpNorm<Eigen::Infinity>();

            double ney = 0.0;
            if (n_eq_ > 0)
            {
                ey = by - A_ * dxv;
                ney = ey.lpNorm<Eigen::Infinity>();
            }
            else
                ey.setZero();

            Gdx = G_ * dxv;
            ez = bz;
            ez.head(n_lc_) -= Gdx.head(n_lc_);
            {
                std::size_t ezi = n_lc_, gi = n_lc_;
                for (const SoCone &sc : so_cones_)
                {
                    ez.segment(ezi, sc.dim) -= Gdx.segment(gi, sc.dim);
                    ezi += sc.dim + 2;
                    gi += sc.dim;
                }
            }
            const auto dz_exp = x.tail(mtilde);
            if (initialize)
                ez += dz_exp;  // V = I before the first scaling update
            else
                scale2add(dz_exp, ez);
            const double nez = ez.lpNorm<Eigen::Infinity>();

            double nerr = std::max(nex, nez);
            if (n_eq_ > 0)
                nerr = std::max(nerr, ney);

            if (k_ref > 0 && nerr > nerr_prev)
            {
                x -= correction;
                --k_ref;
                break;
            }
            if (k_ref == settings_.nitref || nerr < error_threshold ||
                (k_ref > 0 && nerr_prev < settings_.irerrfact * nerr))
                break;
            nerr_prev = nerr;

            Vec e(dim_K_);
            e << ex, ey, ez;
            correction = ldlt_.solve(e);
            x += correction;
        }

        dx = x.head(n_var_);
        dy = x.segment(n_var_, n_eq_);
        gather_cone_rows(x, dz);
        return k_ref;
    }

    // ----- residuals, rhs assembly, termination -----------------------------

    double dot_b(const Vec &y) const { return n_eq_ > 0 ? b_.dot(y) : 0.0; }

    void compute_residuals()
    {
        rx_ = -(Gt_ * z_);
        if (n_eq_ > 0)
            rx_ -= At_ * y_;
        hresx_ = rx_.norm();
        rx_ -= tau_ * c_;

        if (n_eq_ > 0)
        {
            ry_ = A_ * x_;
            hresy_ = ry_.norm();
            ry_ -= tau_ * b_;
        }
        else
        {
            ry_.resize(0);
            hresy_ = 0.0;
        }

        rz_ = s_ + G_ * x_;
        hresz_ = rz_.norm();
        rz_ -= tau_ * h_;

        cx_ = c_.dot(x_);
        by_ = n_eq_ > 0 ? b_.dot(y_) : 0.0;
        hz_ = h_.dot(z_);
        rt_ = kap_ + cx_ + by_ + hz_;

        nx_ = x_.norm();
        ny_ = y_.norm();
        nz_ = z_.norm();
        ns_ = s_.norm();
    }

    void update_statistics()
    {
        info_.gap = s_.dot(z_);
        info_.mu = (info_.gap + kap_ * tau_) / static_cast<double>(n_lc_ + so_cones_.size() + 1);
        info_.kapovert = kap_ / tau_;
        info_.pcost = cx_ / tau_;
        info_.dcost = -(hz_ + by_) / tau_;

        if (info_.pcost < 0.0)
            info_.relgap = info_.gap / (-info_.pcost);
        else if (info_.dcost > 0.0)
            info_.relgap = info_.gap / info_.dcost;
        else
            info_.relgap = std::nullopt;

        const double nry = n_eq_ > 0 ? ry_.norm() / std::max(resy0_ + nx_, 1.0) : 0.0;
        const double nrz = rz_.norm() / std::max(resz0_ + nx_ + ns_, 1.0);
        info_.pres = std::max(nry, nrz) / tau_;
        info_.dres = rx_.norm() / std::max(resx0_ + ny_ + nz_, 1.0) / tau_;

        info_.pinfres = std::nullopt;
        info_.dinfres = std::nullopt;
        if ((hz_ + by_) / std::max(ny_ + nz_, 1.0) < -settings_.reltol)
            info_.pinfres = hresx_ / std::max(ny_ + nz_, 1.0);
        if (cx_ / std::max(nx_, 1.0) < -settings_.reltol)
            info_.dinfres = std::max(hresy_ / std::max(nx_, 1.0),
                                     hresz_ / std::max(nx_ + ns_, 1.0));
    }

    // ExitCode::Fatal doubles as "not converged yet" inside the loop.
    ExitCode check_exit(bool reduced)
    {
        const double feastol = reduced ? settings_.feastol_inacc : settings_.feastol;
        const double abstol = reduced ? settings_.abstol_inacc : settings_.abstol;
        const double reltol = reduced ? settings_.reltol_inacc : settings_.reltol;

        if ((-cx_ > 0.0 || -by_ - hz_ >= -abstol) && info_.pres < feastol &&
            info_.dres < feastol &&
            (info_.gap < abstol || (info_.relgap && *info_.relgap < reltol)))
            return reduced ? ExitCode::OptimalInaccurate : ExitCode::Optimal;

        if (info_.dinfres && *info_.dinfres < feastol && tau_ < kap_)
            return reduced ? ExitCode::DualInfeasibleInaccurate : ExitCode::DualInfeasible;

        if ((info_.pinfres && *info_.pinfres < feastol && tau_ < kap_) ||
            (tau_ < feastol && kap_ < feastol && info_.pinfres && *info_.pinfres < feastol))
            return reduced ? ExitCode::PrimalInfeasibleInaccurate : ExitCode::PrimalInfeasible;

        return ExitCode::Fatal;
    }

    void rhs_affine(Vec &rhs) const
    {
        rhs.head(n_var_) = rx_;
        rhs.segment(n_var_, n_eq_) = -ry_;
        Vec d = s_ - rz_;
        scatter_cone_rows(d, rhs);
        // expansion slots
        std::size_t idx = n_var_ + n_eq_ + n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            idx += sc.dim;
            rhs(idx++) = 0.0;
            rhs(idx++) = 0.0;
        }
    }

    void rhs_combined(Vec &rhs)
    {
        Vec ds1(n_ineq_), ds2(n_ineq_);
        conic_product(lambda_, lambda_, ds1);
        conic_product(dsaff_by_W_, W_times_dzaff_, ds2);

        const double sigmamu = info_.sigma * info_.mu;
        ds1 += ds2;
        ds1.head(n_lc_).array() -= sigmamu;
        std::size_t k = n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            ds1(k) -= sigmamu;
            k += sc.dim;
        }

        conic_division(lambda_, ds1, dsaff_by_W_);
        scale(dsaff_by_W_, ds1);

        const double oms = 1.0 - info_.sigma;
        rhs.head(n_var_ + n_eq_) *= oms;
        Vec d = -oms * rz_ + ds1;
        scatter_cone_rows(d, rhs);
        std::size_t idx = n_var_ + n_eq_ + n_lc_;
        for (const SoCone &sc : so_cones_)
        {
            idx += sc.dim;
            rhs(idx++) = 0.0;
            rhs(idx++) = 0.0;
        }
    }

    void save_best(Best &best) const
    {
        best.x = x_;
        best.y = y_;
        best.z = z_;
        best.s = s_;
        best.kap = kap_;
        best.tau = tau_;
        best.info = info_;
        best.set = true;
    }

    void restore_best(const Best &best)
    {
        if (!best.set)
            return;
        x_ = best.x;
        y_ = best.y;
        z_ = best.z;
        s_ = best.s;
        kap_ = best.kap;
        tau_ = best.tau;
        info_ = best.info;
    }

    ExitCode finish(ExitCode code)
    {
        // Undo homogenization and equilibration.
        x_ = x_.cwiseQuotient(x_equil_ * tau_);
        if (n_eq_ > 0)
            y_ = y_.cwiseQuotient(A_equil_ * tau_);
        z_ = z_.cwiseQuotient(G_equil_ * tau_);
        s_ = s_.cwiseProduct(G_equil_ / tau_);
        return code;
    }

    // ----- data -------------------------------------------------------------

    Settings settings_;
    SparseMat G_, A_, Gt_, At_;
    Vec c_, h_, b_;
    std::size_t n_var_ = 0, n_eq_ = 0, n_ineq_ = 0, n_lc_ = 0, dim_K_ = 0;

    LpCone lp_cone_;
    std::vector<SoCone> so_cones_;

    SparseMat K_;
    std::vector<double *> kkt_V_ptr_;
    Eigen::SimplicialLDLT<SparseMat, Eigen::Upper> ldlt_;

    Vec x_, y_, z_, s_, lambda_;
    double kap_ = 1.0, tau_ = 1.0;
    Information info_;

    Vec x_equil_, A_equil_, G_equil_;
    Vec rx_, ry_, rz_;
    Vec W_times_dzaff_, dsaff_by_W_, dsaff_;
    double hresx_ = 0.0, hresy_ = 0.0, hresz_ = 0.0;
    double cx_ = 0.0, by_ = 0.0, hz_ = 0.0, rt_ = 0.0;
    double nx_ = 0.0, ny_ = 0.0, nz_ = 0.0, ns_ = 0.0;
    double resx0_ = 1.0, resy0_ = 1.0, resz0_ = 1.0;
};

} // namespace mgdp::ipm

#endif // MGDP_IPM_HPP
