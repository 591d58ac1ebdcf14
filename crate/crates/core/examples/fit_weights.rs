use colhybrid::par::Exec;
use colhybrid::pipeline::{fit_energy_weights, PowerTargets, Setup};
use colhybrid::workload::reference_suite;

fn main() {
    let fit = fit_energy_weights(
        Exec::Parallel,
        &reference_suite(),
        &Setup::default(),
        &PowerTargets::default(),
        10,
        0.005,
    )
    .expect("fit");
    println!("{:#?}", fit);
}
