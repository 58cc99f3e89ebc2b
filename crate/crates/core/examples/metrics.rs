//! Error metrics on rescaled ground truth and the relative-change notation
//! used in reports.

use urbanmas::evaluation::{error_metrics, format_change, relative_change, rescale};

fn main() -> urbanmas::Result<()> {
    let raw_truth = [212.0, 96.0, 154.0];
    let truth = rescale(&raw_truth)?;
    println!("truth {raw_truth:?} rescaled to {truth:?}");

    let full = error_metrics(&[7.5, 1.0, 4.0], &truth)?;
    let ablated = error_metrics(&[6.0, 2.5, 5.0], &truth)?;
    for (label, m) in [("full", &full), ("ablated", &ablated)] {
        println!("{label:<8} mae {:.4}  mse {:.4}  rmse {:.4}", m.mae, m.mse, m.rmse);
    }
    println!(
        "ablated rmse {:.2} {}",
        ablated.rmse,
        format_change(relative_change(full.rmse, ablated.rmse))
    );
    Ok(())
}
