#ifndef MGDP_TEST_SUPPORT_HPP
#define MGDP_TEST_SUPPORT_HPP

#include <fstream>
#include <sstream>
#include <string>

#include "mgdp/lr.hpp"
#include "mgdp/netmodel.hpp"

namespace testsupport {

inline std::string read_file(const std::string &path)
{
    std::ifstream in(path);
    if (!in.good())
        throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline mgdp::netmodel::NetworkCase load_case33()
{
    return mgdp::netmodel::parse_matpower_case(
        read_file(std::string(MGDP_DATA_DIR) + "/case33bw.m"));
}

inline const std::vector<int> kTable1EssBuses = {2, 7, 12, 17, 23, 27, 31};

// Table-1 style context on case33bw: uniform 0.9/1.1 voltage bounds,
// identical ESS parameters, constant forecast from the case demands.
inline mgdp::lr::LrContext table1_context(int horizon,
                                          const Eigen::VectorXd *s_init = nullptr)
{
    using namespace mgdp;
    netmodel::PerUnitOptions opt;
    opt.vmin_override = 0.9;
    opt.vmax_override = 1.1;
    netmodel::MicrogridNetwork net =
        netmodel::to_per_unit(load_case33(), kTable1EssBuses, 1, opt);

    lr::EssFleet fleet = lr::EssFleet::uniform(kTable1EssBuses, 0.3594, 3.5940, 1.1980,
                                               1.1980, 0.90, 1.11, -1.1980, 1.1980);
    if (s_init)
        fleet.s_init = *s_init;
    else
        fleet.s_init = 0.8 * fleet.s_max;

    lr::LoadForecast fc = lr::LoadForecast::constant(net, horizon);
    return lr::LrContext::make(std::move(net), std::move(fleet), std::move(fc));
}

// Two-bus single-branch system: ESS at the root, one load. With `tight_soc`
// the initial SoC is sized by the exact nonconvex power flow so that full
// pickup consumes the whole usable energy budget.
struct Toy2
{
    static constexpr double kBase = 1.0;     // MVA
    static constexpr double kR = 0.02;       // p.u.
    static constexpr double kX = 0.04;       // p.u.
    static constexpr double kPLoad = 0.5;    // MW
    static constexpr double kQLoad = 0.2;    // MVAr
    static constexpr double kPMax = 2.0;     // MW
    static constexpr double kGammaCh = 0.90;
    static constexpr double kGammaDis = 1.11;
    static constexpr double kSMin = 0.1;

    // Exact sending-end flow at v_parent pinned to the upper voltage bound:
    // fixed point of l = (P^2 + Q^2) / v with P = p_load + r l, Q = q_load + x l.
    static double sending_power_pu()
    {
        const double v = 1.21;
        double l = 0.0;
        for (int i = 0; i < 200; ++i)
        {
            const double P = kPLoad / kBase + kR * l;
            const double Q = kQLoad / kBase + kX * l;
            l = (P * P + Q * Q) / v;
        }
        return kPLoad / kBase + kR * l;
    }

    static mgdp::lr::LrContext context(int horizon, bool tight_soc,
                                       double s_init_override = -1.0)
    {
        using namespace mgdp;
        netmodel::NetworkCase nc;
        nc.base_mva = kBase;
        nc.buses.push_back({1, 0.0, 0.0, 0.9, 1.1});
        nc.buses.push_back({2, kPLoad, kQLoad, 0.9, 1.1});
        nc.branches.push_back({1, 2, kR, kX, {}});
        netmodel::MicrogridNetwork net = netmodel::to_per_unit(nc, {1}, 1);

        lr::EssFleet fleet = lr::EssFleet::uniform({1}, kSMin, 10.0, kPMax, kPMax, kGammaCh,
                                                   kGammaDis, -kPMax, kPMax);
        if (s_init_override >= 0.0)
            fleet.s_init(0) = s_init_override;
        else if (tight_soc)
            fleet.s_init(0) =
                kSMin + horizon * kGammaDis * sending_power_pu() * kBase;
        else
            fleet.s_init(0) = 8.0;

        lr::LoadForecast fc = lr::LoadForecast::constant(net, horizon);
        return lr::LrContext::make(std::move(net), std::move(fleet), std::move(fc));
    }
};

// Four-bus system with two ESS units; N_E * T = 4 for T = 2, so the mode
// space is enumerable. Load sized so that mode choices genuinely matter.
inline mgdp::lr::LrContext tiny4_context(int horizon = 2)
{
    using namespace mgdp;
    netmodel::NetworkCase nc;
    nc.base_mva = 1.0;
    nc.buses.push_back({1, 0.0, 0.0, 0.9, 1.1});
    nc.buses.push_back({2, 0.9, 0.35, 0.9, 1.1});
    nc.buses.push_back({3, 0.0, 0.0, 0.9, 1.1});  // ESS
    nc.buses.push_back({4, 0.0, 0.0, 0.9, 1.1});  // ESS
    nc.branches.push_back({1, 2, 0.015, 0.03, {}});
    nc.branches.push_back({2, 3, 0.02, 0.025, {}});
    nc.branches.push_back({2, 4, 0.025, 0.02, {}});
    netmodel::MicrogridNetwork net = netmodel::to_per_unit(nc, {3, 4}, 1);

    lr::EssFleet fleet = lr::EssFleet::uniform({3, 4}, 0.05, 2.0, 0.6, 0.6, 0.9, 1.11,
                                               -0.6, 0.6);
    // Tight enough that a single ESS cannot serve the load alone at full power.
    fleet.s_init << 1.1, 0.9;

    lr::LoadForecast fc = lr::LoadForecast::constant(net, horizon);
    return lr::LrContext::make(std::move(net), std::move(fleet), std::move(fc));
}

} // namespace testsupport

#endif // MGDP_TEST_SUPPORT_HPP
