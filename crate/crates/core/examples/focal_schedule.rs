use evdet::classifier::{focal_loss, PlateauConfig, PlateauScheduler};

fn main() {
    println!("focal loss, alpha 0.25 gamma 2");
    for p in [0.05, 0.3, 0.5, 0.7, 0.95] {
        println!(
            "  p={p:<4}  positive {:.5}  negative {:.5}",
            focal_loss(p, true, 0.25, 2.0),
            focal_loss(p, false, 0.25, 2.0)
        );
    }

    // a loss that never improves: the rate halves every fourth step
    let mut s = PlateauScheduler::new(PlateauConfig {
        initial_lr: 1e-4,
        patience: 3,
        ..Default::default()
    });
    loop {
        let step = s.step(1.0);
        if step.decayed || step.stop {
            println!(
                "step {:>2}: lr {:.3e}{}",
                s.steps(),
                step.lr,
                if step.stop { "  stop" } else { "" }
            );
        }
        if step.stop {
            break;
        }
    }
}
