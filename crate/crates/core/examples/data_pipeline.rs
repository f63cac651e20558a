//! Synthetic image-like data through scaling, stratified sampling,
//! shuffled batching and augmentation.

use fitprobe::data::synthetic::gaussian_blobs;
use fitprobe::data::{
    augment, scale_features, stratified_single_batch, AugmenterSpec, BatchStream, ScaleTarget, ScalerKind,
    ShuffleMode, Transform,
};
use fitprobe::debugger::phase1::column_is_scaled;
use fitprobe::metrics::shannon_equitability;
use fitprobe::tensor::RngStream;

fn main() -> fitprobe::Result<()> {
    let mut rng = RngStream::new(5);
    let raw = gaussian_blobs(&[60, 60, 30, 10], 40.0, &mut rng)?;
    let counts: Vec<f64> = raw.class_counts().iter().map(|&c| c as f64).collect();
    println!("class counts {:?}, equitability {:.3}", raw.class_counts(), shannon_equitability(&counts)?);
    println!("raw pixel column scaled: {}", column_is_scaled(&raw.x.column(0)));

    let (ds, scaler) = scale_features(&raw, ScalerKind::MinMax { lo: 0.0, hi: 1.0 }, ScaleTarget::Inputs)?;
    println!("after {:?}: scaled = {}", scaler.kind, column_is_scaled(&ds.x.column(0)));

    let (_, y) = stratified_single_batch(&ds, 4, &mut rng)?;
    println!("stratified batch of {} rows, labels {:?}", y.rows(), y.argmax_rows());

    for mode in [ShuffleMode::Correct, ShuffleMode::FeaturesOnly] {
        let mut stream = BatchStream::new(50, 9, mode);
        let (x, y) = stream.next_batch(&ds)?;
        let kept = (0..x.rows())
            .filter(|&r| (0..ds.len()).any(|i| ds.x.row(i) == x.row(r) && ds.y.row(i) == y.row(r)))
            .count();
        println!("{mode:?}: {kept}/{} pairs intact in the first batch", x.rows());
    }

    let spec = AugmenterSpec::new(vec![
        Transform::GaussianNoise { sigma: 0.05, ratio: 0.5 },
        Transform::HorizontalFlip { height: 8, width: 8, probability: 0.5 },
    ]);
    let batch = ds.x.select_rows(&[0, 1, 2]);
    let aug = augment(&batch, &spec, &mut rng)?;
    println!("augmentation moved values by at most {:.3}", aug.max_abs_diff(&batch));
    Ok(())
}
