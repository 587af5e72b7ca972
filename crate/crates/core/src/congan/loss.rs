//! Hinge adversarial loss plus auxiliary-classifier cross-entropy.

/// Mean cross-entropy of row-wise softmax logits and its gradient.
pub fn cross_entropy(logits: &[f64], y: &[usize], k: usize) -> (f64, Vec<f64>) {
    let n = y.len();
    let mut grad = vec![0.0; n * k];
    let mut loss = 0.0;
    for (i, (row, g)) in logits.chunks(k).zip(grad.chunks_mut(k)).enumerate() {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        let lse = mx + s.ln();
        loss += lse - row[y[i]];
        for (gj, v) in g.iter_mut().zip(row) {
            *gj = (v - lse).exp() / n as f64;
        }
        g[y[i]] -= 1.0 / n as f64;
    }
    (loss / n as f64, grad)
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(logits: &[f64], y: &[usize], k: usize) -> f64 {
    let hits = logits
        .chunks(k)
        .zip(y)
        .filter(|(row, &t)| {
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best == t
        })
        .count();
    hits as f64 / y.len().max(1) as f64
}

/// Discriminator loss and gradients with respect to its four outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DLoss {
    pub loss: f64,
    pub adv: f64,
    pub ac: f64,
    pub d_adv_real: Vec<f64>,
    pub d_adv_fake: Vec<f64>,
    pub d_logits_real: Vec<f64>,
    pub d_logits_fake: Vec<f64>,
}

/// Generator loss and gradients with respect to D's outputs on fakes.
#[derive(Debug, Clone, PartialEq)]
pub struct GLoss {
    pub loss: f64,
    pub adv: f64,
    pub ac: f64,
    pub d_adv: Vec<f64>,
    pub d_logits: Vec<f64>,
}

/// `mean(relu(1 - D(real))) + mean(relu(1 + D(fake)))` plus
/// `lambda_ac * (CE(real) [+ CE(fake)])`.
#[allow(clippy::too_many_arguments)]
pub fn d_loss(
    adv_real: &[f64],
    adv_fake: &[f64],
    logits_real: &[f64],
    logits_fake: &[f64],
    y_real: &[usize],
    y_fake: &[usize],
    k: usize,
    lambda_ac: f64,
    ac_fake: bool,
) -> DLoss {
    let (nr, nf) = (adv_real.len() as f64, adv_fake.len() as f64);
    let mut adv = 0.0;
    let d_adv_real = adv_real
        .iter()
        .map(|&s| {
            adv += (1.0 - s).max(0.0) / nr;
            if s < 1.0 {
                -1.0 / nr
            } else {
                0.0
            }
        })
        .collect();
    let d_adv_fake = adv_fake
        .iter()
        .map(|&s| {
            adv += (1.0 + s).max(0.0) / nf;
            if s > -1.0 {
                1.0 / nf
            } else {
                0.0
            }
        })
        .collect();
    let (ce_r, mut g_r) = cross_entropy(logits_real, y_real, k);
    let (ce_f, mut g_f) = if ac_fake {
        cross_entropy(logits_fake, y_fake, k)
    } else {
        (0.0, vec![0.0; logits_fake.len()])
    };
    g_r.iter_mut().chain(g_f.iter_mut()).for_each(|g| *g *= lambda_ac);
    let ac = ce_r + ce_f;
    DLoss {
        loss: adv + lambda_ac * ac,
        adv,
        ac,
        d_adv_real,
        d_adv_fake,
        d_logits_real: g_r,
        d_logits_fake: g_f,
    }
}

/// `-mean(D(fake)) + lambda_ac * CE(fake)`.
pub fn g_loss(adv_fake: &[f64], logits_fake: &[f64], y_fake: &[usize], k: usize, lambda_ac: f64) -> GLoss {
    let n = adv_fake.len() as f64;
    let adv = -adv_fake.iter().sum::<f64>() / n;
    let (ce, mut g) = cross_entropy(logits_fake, y_fake, k);
    g.iter_mut().for_each(|v| *v *= lambda_ac);
    GLoss {
        loss: adv + lambda_ac * ce,
        adv,
        ac: ce,
        d_adv: vec![-1.0 / n; adv_fake.len()],
        d_logits: g,
    }
}

/// `(L_D, L_G)` for one batch where the fake labels equal the real labels.
pub fn losses(
    adv_real: &[f64],
    adv_fake: &[f64],
    logits_real: &[f64],
    logits_fake: &[f64],
    y: &[usize],
    k: usize,
    lambda_ac: f64,
) -> (f64, f64) {
    let d = d_loss(adv_real, adv_fake, logits_real, logits_fake, y, y, k, lambda_ac, true);
    let g = g_loss(adv_fake, logits_fake, y, k, lambda_ac);
    (d.loss, g.loss)
}
