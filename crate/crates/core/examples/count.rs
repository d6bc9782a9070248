use rayon::prelude::*;
use std::time::Instant;
use vsc_core::oracle::{reduction_graph, TermEnumerator};
use vsc_core::rewriting::{evaluate, Strategy, TraceStatus};
use vsc_core::inference::{derive, Mode};

fn main() {
    let e = TermEnumerator::new(7, 0, true);
    let total = e.total();
    let sample = 20_000u64;
    let stride = total / sample;
    for cap in [60usize, 150, 300] {
        let t0 = Instant::now();
        let trunc: u64 = (0..sample).into_par_iter().map(|k| {
            let t = e.get(k * stride);
            let mut n = 0;
            for strat in [Strategy::Open, Strategy::External] {
                let g = reduction_graph(&t, strat, cap);
                if g.truncated { n += 1; }
            }
            n
        }).sum();
        println!("cap {cap}: {trunc} truncated of {} graphs in {:?}", 2*sample, t0.elapsed());
    }
    // typing workload: derive in both modes + per-step accounting cost proxy
    let t0 = Instant::now();
    let (mut normed, mut idfail) = (0u64, 0u64);
    let stats: Vec<(u64, u64)> = (0..sample).into_par_iter().map(|k| {
        let t = e.get(k * stride);
        let tr = evaluate(&t, Strategy::External, 1000, false);
        if tr.status != TraceStatus::Normal { return (0, 0); }
        let r = derive(&t, Mode::StrongUnitary, 1000);
        let r2 = derive(&t, Mode::OpenTight, 1000);
        let ok = r.identity_holds && r2.identity_holds;
        (1, if ok { 0 } else { 1 })
    }).collect();
    for s in &stats { normed += s.0; idfail += s.1; }
    let dt = t0.elapsed();
    println!("typing: {normed} normalizing, {idfail} identity failures, {dt:?} => est full: {:.0}s",
        total as f64 * dt.as_secs_f64() / sample as f64);
}
