/// Reduce-on-plateau learning-rate controller: halve the rate after
/// `patience` consecutive epochs without a strict validation-loss
/// improvement, never going below `min_lr`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    pub patience: u32,
    pub factor: f64,
    pub min_lr: f64,
    best_loss: f64,
    epochs_since_improvement: u32,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64) -> Self {
        PlateauScheduler {
            lr: initial_lr,
            patience: 5,
            factor: 0.5,
            min_lr: 1e-6,
            best_loss: f64::INFINITY,
            epochs_since_improvement: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feed one epoch's validation loss; returns the (possibly reduced) lr.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.epochs_since_improvement = 0;
            }
        }
        self.lr
    }
}
