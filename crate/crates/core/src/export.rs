//! Plot-ready CSV emission.
//!
//! Writers are deterministic: fields are formatted with the scalar's
//! `Display` (shortest round-trip form for floats), rows follow input order,
//! and no timestamps or environment data appear — identical inputs produce
//! byte-identical files.

use std::io::{self, Write};

use crate::auctions::AuctionOutcome;
use crate::markov::{ChainTrace, StationaryDistribution};
use crate::model::Placement;
use crate::perturb::BoundReport;
use crate::scalar::{RealScalar, Scalar};

/// One row per visit: `jump_index, sim_time, holding_time, placement,
/// revenue`, where `sim_time` is the clock at entry to the state.
pub fn write_chain_trace_csv<W: Write, R: RealScalar>(mut w: W, trace: &ChainTrace<R>) -> io::Result<()> {
    writeln!(w, "jump_index,sim_time,holding_time,placement,revenue")?;
    let mut clock = R::zero();
    for (i, record) in trace.records.iter().enumerate() {
        writeln!(w, "{i},{clock},{},{},{}", record.holding_time, record.placement.label(), record.revenue_phi)?;
        clock = clock + record.holding_time;
    }
    Ok(())
}

/// One row per placement: `placement, probability, phi`.
pub fn write_stationary_csv<W: Write, R: RealScalar>(mut w: W, dist: &StationaryDistribution<R>) -> io::Result<()> {
    writeln!(w, "placement,probability,phi")?;
    for ((placement, probability), phi) in dist.support.iter().zip(&dist.probabilities).zip(&dist.revenue_phis) {
        writeln!(w, "{},{probability},{phi}", placement.label())?;
    }
    Ok(())
}

/// One row per negotiation round: `round, posted_price, num_active,
/// rejected_ids` (ids `;`-joined, empty when nobody left).
pub fn write_auction_rounds_csv<W: Write, S: Scalar>(mut w: W, outcome: &AuctionOutcome<S>) -> io::Result<()> {
    writeln!(w, "round,posted_price,num_active,rejected_ids")?;
    for (i, round) in outcome.rounds.iter().enumerate() {
        let rejected: Vec<String> = round.rejected.iter().map(u32::to_string).collect();
        writeln!(w, "{},{},{},{}", i + 1, round.posted_price, round.num_active, rejected.join(";"))?;
    }
    Ok(())
}

/// One row per placement: `placement, revenue, is_optimal`, marking every
/// revenue maximizer.
pub fn write_oracle_csv<W: Write, S: Scalar>(
    mut w: W,
    rows: &[(Placement, S)],
    best_revenue: &S,
) -> io::Result<()> {
    writeln!(w, "placement,revenue,is_optimal")?;
    for (placement, revenue) in rows {
        writeln!(w, "{},{revenue},{}", placement.label(), revenue == best_revenue)?;
    }
    Ok(())
}

/// One row per verified instance: `beta, psi_max, tv, tv_bound, gap,
/// gap_bound, pass`.
pub fn write_bound_report_csv<W: Write, R: RealScalar>(
    mut w: W,
    rows: &[(R, R, BoundReport<R>)],
) -> io::Result<()> {
    writeln!(w, "beta,psi_max,tv,tv_bound,gap,gap_bound,pass")?;
    for (beta, psi_max, report) in rows {
        writeln!(
            w,
            "{beta},{psi_max},{},{},{},{},{}",
            report.tv,
            report.tv_bound,
            report.revenue_gap,
            report.gap_bound,
            report.both_hold()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::TraceRecord;

    #[test]
    fn trace_rows_accumulate_the_clock() {
        let trace = ChainTrace {
            records: vec![
                TraceRecord { placement: Placement::new(vec![1, 0]), holding_time: 0.5_f64, revenue_phi: 0.25 },
                TraceRecord { placement: Placement::new(vec![0, 1]), holding_time: 1.25, revenue_phi: 0.75 },
            ],
            beta: 2.0,
            seed: 9,
        };
        let mut out = Vec::new();
        write_chain_trace_csv(&mut out, &trace).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "jump_index,sim_time,holding_time,placement,revenue\n0,0,0.5,1-0,0.25\n1,0.5,1.25,0-1,0.75\n"
        );
    }
}
