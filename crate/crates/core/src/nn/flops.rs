/// `Σ n_{l-1}·n_l` over consecutive widths of one sub-network.
pub fn flops_of_list(widths: &[usize]) -> u64 {
    widths.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
}

/// Total multiply count of the three sub-networks (mmWave branch, sub-6GHz
/// branch, classifier). Lists may be empty.
pub fn flops(mmwave: &[usize], sub6: &[usize], classify: &[usize]) -> u64 {
    flops_of_list(mmwave) + flops_of_list(sub6) + flops_of_list(classify)
}
