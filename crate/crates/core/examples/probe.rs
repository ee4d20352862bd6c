use bounded_effects::simulate::*;
use std::time::Instant;
fn main(){
    let boot: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0);
    let reps: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    for e in standard_battery(2000, 1) {
        let t = Instant::now();
        let r = coverage_study(&e.config, &StudySpec{reps, estimator: e.estimator, alpha: 0.95, n_boot: boot}).unwrap();
        println!("{:32} truth {:.4} pi {:.3}/{:.3} lb {:.4}±{:.4} ub {:.4}±{:.4} cov {:.3} ci {:?} fail {} clip {:.2} clamp {:.2} naive {:.3} seld {:.4} {:?}",
          e.name, r.truth.true_att_ao, r.truth.true_pi0, r.truth.true_pi1, r.lb.mean, r.lb.sd, r.ub.mean, r.ub.sd, r.bounds_coverage, r.ci_coverage, r.failed_reps, r.clip_rate, r.clamp_rate, r.naive_did.mean, r.selection_did.mean, t.elapsed());
        println!("   pi_hat {:.4}±{:.4} {:.4}±{:.4} analytic {:?} dual {:.4}", r.pi0_hat.mean, r.pi0_hat.sd, r.pi1_hat.mean, r.pi1_hat.sd, e.config.analytic_pi(), analytic_att_ao(&e.config));
    }
}
