use translim::optimizer::{evaluate_limit, newsvendor_limit, optimal_limit_freeze, revised_limit};
use translim::transforms::{DistributionSpec, ModelParams};

fn main() {
    let params = ModelParams::new(
        0.0054,
        0.0007,
        30.0,
        0.0,
        DistributionSpec::gamma_mark(2.8946, 0.0769).unwrap(),
        DistributionSpec::exponential_arrivals(0.6451).unwrap(),
    )
    .unwrap();

    let freeze = optimal_limit_freeze(&params).unwrap();
    let news = newsvendor_limit(&params).unwrap();
    println!("freeze optimum   : {:.6}", freeze.limit_star);
    println!("newsvendor limit : {:.6}", news.limit_star);
    println!("freeze decline   : {:.6}", freeze.decline_prob_at_star);
    println!("news decline     : {:.6}", news.decline_prob_at_star);
    println!("freeze profit    : {:.6}", freeze.profit_at_star);
    println!("news profit      : {:.6}", news.profit_at_star);

    let original = evaluate_limit(&params, 5000.0).unwrap();
    println!(
        "original ℓ=5000  : balance {:.6} profit {:.6} decline {:.8}",
        original.expected_balance, original.expected_profit, original.decline_prob
    );
    let (rev, report) = revised_limit(&params, freeze.limit_star).unwrap();
    println!(
        "revised {rev}     : balance {:.6} profit {:.6} decline {:.6}",
        report.expected_balance, report.expected_profit, report.decline_prob
    );
    let at_lower = evaluate_limit(&params, news.limit_star).unwrap();
    let at_upper = evaluate_limit(&params, freeze.limit_star).unwrap();
    println!(
        "balance at bounds: [{:.4}, {:.4}]",
        at_lower.expected_balance, at_upper.expected_balance
    );
    println!(
        "profit  at bounds: [{:.4}, {:.4}]",
        at_upper.expected_profit, at_lower.expected_profit
    );
}
