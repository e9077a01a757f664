"""
Модели с общим backbone, головой предсказания аугментаций (15 логитов) и головой задачи,
а также функции потерь совместного обучения: L_total = L_augm + L_task
"""
import math

import numpy as np
import torch
import torch.nn.functional as F
import torchvision
from torch import nn

from safeaug.log import get_logger
from safeaug.models import CATALOG_NAMES

logger = get_logger(__name__)

IGNORE_INDEX = 255
NORM_GROUPS = 8


class LossShapeException(ValueError):
    """
    Формы логитов и целей не совпадают
    """
    pass


class InputShapeException(ValueError):
    """
    Изображения не совпадают с входом модели
    """
    pass


class NonFiniteLossException(ArithmeticError):
    """
    Потеря не является конечным числом. Шаг обучения не выполнен
    """

    def __init__(self, breakdown):
        super().__init__(f'Non-finite loss: {breakdown}')
        self.breakdown = breakdown


def group_norm(channels):
    """
    Нормализация по группам каналов одного изображения: выход не зависит от остальных изображений батча

    >>> group_norm(64)
    GroupNorm(8, 64, eps=1e-05, affine=True)
    """
    return nn.GroupNorm(math.gcd(NORM_GROUPS, channels), channels)


def replace_batch_norm(module):
    """
    Заменяет все BatchNorm2d модуля на group_norm с тем же числом каналов
    :param module: Модуль torch
    :return: Тот же модуль
    """
    for name, child in module.named_children():
        if isinstance(child, nn.BatchNorm2d):
            setattr(module, name, group_norm(child.num_features))
        else:
            replace_batch_norm(child)
    return module


def _conv_block(in_channels, out_channels):
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1, bias=False),
        group_norm(out_channels),
        nn.ReLU(inplace=True),
        nn.MaxPool2d(2),
    )


class TinyCNN(nn.Module):
    """
    Два сверточных блока и глобальный пулинг. Обе головы - линейные слои над пулингом
    """

    def __init__(self, num_classes, aug_labels=len(CATALOG_NAMES), in_channels=3, width=32):
        super().__init__()
        self.features = nn.Sequential(_conv_block(in_channels, width), _conv_block(width, 2 * width))
        self.aug_head = nn.Linear(2 * width, aug_labels)
        self.task_head = nn.Linear(2 * width, num_classes)

    def forward(self, x):
        pooled = F.adaptive_avg_pool2d(self.features(x), 1).flatten(1)
        return self.aug_head(pooled), self.task_head(pooled)


class TinySegmentation(nn.Module):
    """
    Кодировщик TinyCNN и декодер до карты из K каналов в исходном разрешении.
    Голова аугментаций использует самую глубокую карту признаков
    """

    def __init__(self, num_classes, aug_labels=len(CATALOG_NAMES), in_channels=3, width=32):
        super().__init__()
        self.features = nn.Sequential(_conv_block(in_channels, width), _conv_block(width, 2 * width))
        self.decoder = nn.Sequential(
            nn.Conv2d(2 * width, width, kernel_size=3, padding=1, bias=False),
            group_norm(width),
            nn.ReLU(inplace=True),
        )
        self.aug_head = nn.Linear(2 * width, aug_labels)
        self.task_head = nn.Conv2d(width, num_classes, kernel_size=1)

    def forward(self, x):
        deepest = self.features(x)
        aug_logits = self.aug_head(F.adaptive_avg_pool2d(deepest, 1).flatten(1))
        decoded = F.interpolate(self.decoder(deepest), size=x.shape[-2:], mode='bilinear', align_corners=False)
        return aug_logits, self.task_head(decoded)


def _densenet_features(variant):
    constructor = {'densenet121': torchvision.models.densenet121,
                   'densenet169': torchvision.models.densenet169}[variant]
    return constructor(weights=None).features


class DenseNetJoint(nn.Module):
    """
    DenseNet-121/169 из torchvision без классификатора, BatchNorm заменены на group_norm.
    Обе головы над глобальным пулингом
    """

    def __init__(self, variant, num_classes, aug_labels=len(CATALOG_NAMES), in_channels=3):
        super().__init__()
        self.features = _densenet_features(variant)
        if in_channels != 3:
            self.features.conv0 = nn.Conv2d(in_channels, self.features.conv0.out_channels, kernel_size=7,
                                            stride=2, padding=3, bias=False)
        channels = self.features.norm5.num_features
        replace_batch_norm(self.features)
        self.aug_head = nn.Linear(channels, aug_labels)
        self.task_head = nn.Linear(channels, num_classes)

    def forward(self, x):
        pooled = F.adaptive_avg_pool2d(F.relu(self.features(x)), 1).flatten(1)
        return self.aug_head(pooled), self.task_head(pooled)


class FPNDenseNet(nn.Module):
    """
    Feature Pyramid Network над DenseNet: выходы denseblock1..3 и norm5, латеральные свертки 1x1,
    сглаживание 3x3, путь сверху вниз с ближайшим соседом. Уровни суммируются на самом мелком шаге
    """

    def __init__(self, variant, num_classes, aug_labels=len(CATALOG_NAMES), in_channels=3, pyramid_channels=128):
        super().__init__()
        self.features = _densenet_features(variant)
        if in_channels != 3:
            self.features.conv0 = nn.Conv2d(in_channels, self.features.conv0.out_channels, kernel_size=7,
                                            stride=2, padding=3, bias=False)
        self.taps = ('denseblock1', 'denseblock2', 'denseblock3', 'norm5')
        tap_channels = [self.features.transition1.conv.in_channels, self.features.transition2.conv.in_channels,
                        self.features.transition3.conv.in_channels, self.features.norm5.num_features]
        replace_batch_norm(self.features)
        self.lateral = nn.ModuleList([nn.Conv2d(c, pyramid_channels, kernel_size=1) for c in tap_channels])
        self.smooth = nn.ModuleList([nn.Conv2d(pyramid_channels, pyramid_channels, kernel_size=3, padding=1)
                                     for _ in tap_channels])
        self.aug_head = nn.Linear(tap_channels[-1], aug_labels)
        self.task_head = nn.Conv2d(pyramid_channels, num_classes, kernel_size=1)

    def forward(self, x):
        tapped = []
        out = x
        for name, module in self.features.named_children():
            out = module(out)
            if name in self.taps:
                tapped.append(out)
        deepest = F.relu(tapped[-1])
        aug_logits = self.aug_head(F.adaptive_avg_pool2d(deepest, 1).flatten(1))

        top = self.lateral[-1](deepest)
        pyramid = [self.smooth[-1](top)]
        for level in range(len(tapped) - 2, -1, -1):
            lateral = self.lateral[level](tapped[level])
            top = lateral + F.interpolate(top, size=lateral.shape[-2:], mode='nearest')
            pyramid.insert(0, self.smooth[level](top))
        finest = pyramid[0].shape[-2:]
        fused = sum(F.interpolate(level, size=finest, mode='nearest') for level in pyramid)
        logits = F.interpolate(self.task_head(fused), size=x.shape[-2:], mode='bilinear', align_corners=False)
        return aug_logits, logits


class ModelHandle:
    """
    Модель вместе с описанием ее входа и голов

    Attributes:
        module (nn.Module): Сеть, возвращающая (aug_logits, task_logits)
        backbone (str): tiny, densenet121, densenet169 (для сегментации - FPN над DenseNet)
        task (str): classification или segmentation
        num_classes (int): Ширина головы задачи
        in_channels (int): Число каналов входа
        input_size (Tuple[int, int]): Входное разрешение (высота, ширина)
        label_names (Tuple[str]): Отображение меток головы аугментаций
        device (torch.device): Устройство модели
    """

    def __init__(self, module, backbone, task, num_classes, in_channels, input_size, label_names=CATALOG_NAMES,
                 device='cpu'):
        self.module = module
        self.backbone = backbone
        self.task = task
        self.num_classes = num_classes
        self.in_channels = in_channels
        self.input_size = tuple(input_size)
        self.label_names = tuple(label_names)
        self.device = torch.device(device)
        self.module.to(self.device)

    @property
    def descriptor(self):
        return {'backbone': self.backbone, 'task': self.task, 'num_classes': self.num_classes,
                'in_channels': self.in_channels, 'input_size': list(self.input_size),
                'label_names': list(self.label_names)}

    def to_tensor(self, images):
        """
        Переводит батч N x H x W x C (numpy, уже нормализованный) в тензор N x C x H x W на устройстве модели
        """
        if isinstance(images, torch.Tensor):
            return images.to(self.device)
        dtype = next(self.module.parameters()).dtype
        return torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2))).to(self.device, dtype)

    @torch.no_grad()
    def predict(self, images):
        """
        Предсказание в режиме eval
        :param images: Батч N x H x W x C (numpy) или N x C x H x W (тензор)
        :return: Кортеж numpy-массивов (aug_logits N x 15, task_logits)
        """
        self.module.eval()
        aug_logits, task_logits = forward(self, self.to_tensor(images))
        return aug_logits.cpu().numpy(), task_logits.cpu().numpy()

    def predict_aug_logits(self, images):
        return self.predict(images)[0]

    def predict_task(self, images):
        """
        Возвращает предсказанные классы: N для классификации, N x H x W для сегментации
        """
        return self.predict(images)[1].argmax(axis=1)


def build_model(backbone, task, num_classes, in_channels=3, input_size=(32, 32), label_names=CATALOG_NAMES,
                device='cpu', seed=None):
    """
    Создает модель с двумя головами
    :param backbone: tiny, densenet121 или densenet169
    :param task: classification или segmentation
    :param num_classes: Число классов K
    :param in_channels: Число каналов изображения
    :param input_size: Входное разрешение
    :param label_names: Названия меток головы аугментаций
    :param device: Устройство
    :param seed: Зерно инициализации весов или None
    :rtype: ModelHandle
    :raises ValueError: Если backbone или task неизвестны
    """
    if seed is not None:
        torch.manual_seed(seed)
    aug_labels = len(label_names)
    if task == 'classification':
        if backbone == 'tiny':
            module = TinyCNN(num_classes, aug_labels, in_channels)
        elif backbone in ('densenet121', 'densenet169'):
            module = DenseNetJoint(backbone, num_classes, aug_labels, in_channels)
        else:
            raise ValueError(f'Unknown backbone "{backbone}"')
    elif task == 'segmentation':
        if backbone == 'tiny':
            module = TinySegmentation(num_classes, aug_labels, in_channels)
        elif backbone in ('densenet121', 'densenet169'):
            module = FPNDenseNet(backbone, num_classes, aug_labels, in_channels)
        else:
            raise ValueError(f'Unknown backbone "{backbone}"')
    else:
        raise ValueError(f'Unknown task "{task}"')
    return ModelHandle(module, backbone, task, num_classes, in_channels, input_size, label_names, device)


def augmentation_loss(logits, targets):
    """
    Многометочная бинарная кросс-энтропия с сигмоидой, среднее по батчу и меткам
    :param logits: N x L
    :type logits: torch.Tensor
    :param targets: N x L из {0, 1}
    :type targets: torch.Tensor
    :rtype: torch.Tensor
    :raises LossShapeException: Если формы не совпадают
    :raises ValueError: Если цели не бинарные
    """
    if logits.shape != targets.shape:
        raise LossShapeException(f'Logits {tuple(logits.shape)} and targets {tuple(targets.shape)} differ')
    if not ((targets == 0) | (targets == 1)).all():
        raise ValueError('Augmentation targets must be binary')
    return F.binary_cross_entropy_with_logits(logits, targets.to(logits.dtype), reduction='mean')


def classification_loss(logits, labels):
    """
    Средняя softmax кросс-энтропия
    :param logits: N x K
    :param labels: N индексов классов
    :rtype: torch.Tensor
    """
    if logits.ndim != 2 or labels.ndim != 1 or logits.shape[0] != labels.shape[0]:
        raise LossShapeException(f'Logits {tuple(logits.shape)} do not match labels {tuple(labels.shape)}')
    if labels.numel() and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError(f'Class labels must be in [0, {logits.shape[1]})')
    return F.cross_entropy(logits, labels.long())


def segmentation_loss(logit_map, mask, ignore_index=IGNORE_INDEX):
    """
    Средняя попиксельная кросс-энтропия по неигнорируемым пикселям
    :param logit_map: N x K x H x W
    :param mask: N x H x W индексов классов, ignore_index исключается
    :rtype: torch.Tensor
    """
    if logit_map.ndim != 4 or mask.ndim != 3 or logit_map.shape[0] != mask.shape[0] \
            or logit_map.shape[2:] != mask.shape[1:]:
        raise LossShapeException(f'Logit map {tuple(logit_map.shape)} does not match mask {tuple(mask.shape)}')
    valid = mask != ignore_index
    if valid.any() and (mask[valid].min() < 0 or mask[valid].max() >= logit_map.shape[1]):
        raise ValueError(f'Mask classes must be in [0, {logit_map.shape[1]}) or {ignore_index}')
    if not valid.any():
        return logit_map.sum() * 0
    return F.cross_entropy(logit_map, mask.long(), ignore_index=ignore_index)


def task_loss(task, logits, targets):
    if task == 'segmentation':
        return segmentation_loss(logits, targets)
    return classification_loss(logits, targets)


def total_loss(l_augm, l_task):
    """
    L_total = L_augm + L_task без весов

    >>> float(total_loss(torch.tensor(0.5), torch.tensor(0.25)))
    0.75
    """
    return l_augm + l_task


def forward(model: ModelHandle, images):
    """
    Один проход backbone и обе головы
    :param model: Модель
    :param images: Тензор N x C x H x W
    :return: Кортеж (aug_logits N x 15, task_logits)
    :raises InputShapeException: Если изображения не совпадают с входом модели
    """
    if images.ndim != 4 or images.shape[1] != model.in_channels or tuple(images.shape[2:]) != model.input_size:
        raise InputShapeException(f'Images {tuple(images.shape)} do not match model input '
                                  f'{model.in_channels} x {model.input_size[0]} x {model.input_size[1]}')
    return model.module(images)


class JointBatch:
    """
    Батч совместного обучения

    Attributes:
        images (torch.Tensor): N x C x H x W после конвейера и нормализации
        aug_labels (torch.Tensor): N x 15 (вектор на батч размножается на все элементы)
        task_labels (torch.Tensor): N классов или N x H x W масок
    """

    def __init__(self, images, aug_labels, task_labels):
        aug_labels = torch.as_tensor(aug_labels, dtype=images.dtype)
        if aug_labels.ndim == 1:
            aug_labels = aug_labels.unsqueeze(0).expand(images.shape[0], -1)
        task_labels = torch.as_tensor(task_labels)
        if not (images.shape[0] == aug_labels.shape[0] == task_labels.shape[0]):
            raise LossShapeException('Batch dimensions of images, augmentation labels and task labels differ')
        self.images = images
        self.aug_labels = aug_labels
        self.task_labels = task_labels.long()

    def to(self, device):
        return JointBatch(self.images.to(device), self.aug_labels.to(device), self.task_labels.to(device))

    def __len__(self):
        return self.images.shape[0]


class LossBreakdown:
    """
    Значения потерь шага обучения

    Attributes:
        augm (float or None): L_augm (None при обучении только задачи)
        task (float): L_task
        total (float): L_total
    """

    def __init__(self, augm, task, total):
        self.augm = augm
        self.task = task
        self.total = total

    @property
    def is_finite(self):
        values = [self.task, self.total] + ([] if self.augm is None else [self.augm])
        return all(math.isfinite(value) for value in values)

    def to_dict(self):
        return {'augm': self.augm, 'task': self.task, 'total': self.total}

    def __repr__(self):
        return f'LossBreakdown(augm={self.augm}, task={self.task}, total={self.total})'


def compute_losses(model: ModelHandle, batch: JointBatch, joint=True):
    """
    Вычисляет потери для батча
    :return: Кортеж (тензор L_total, LossBreakdown)
    """
    aug_logits, task_logits = forward(model, batch.images)
    l_task = task_loss(model.task, task_logits, batch.task_labels)
    if joint:
        l_augm = augmentation_loss(aug_logits, batch.aug_labels)
        l_total = total_loss(l_augm, l_task)
        breakdown = LossBreakdown(l_augm.item(), l_task.item(), l_total.item())
    else:
        l_total = l_task
        breakdown = LossBreakdown(None, l_task.item(), l_total.item())
    return l_total, breakdown


def train_step(model: ModelHandle, batch: JointBatch, optimizer, joint=True):
    """
    Один шаг оптимизатора по L_total (или только L_task при joint=False).
    Состояние модели и оптимизатора обновляется на месте
    :param model: Модель
    :param batch: Батч
    :param optimizer: Оптимизатор torch
    :param joint: Учитывать ли голову аугментаций
    :rtype: LossBreakdown
    :raises NonFiniteLossException: Если потеря не конечна (шаг не выполняется)
    """
    model.module.train()
    optimizer.zero_grad()
    l_total, breakdown = compute_losses(model, batch.to(model.device), joint)
    if not breakdown.is_finite:
        optimizer.zero_grad()
        raise NonFiniteLossException(breakdown)
    l_total.backward()
    optimizer.step()
    return breakdown


def build_optimizer(model: ModelHandle, name, lr, momentum=0.9, weight_decay=5e-4):
    """
    SGD(lr, momentum, weight_decay) или Adam(lr). Для Adam weight decay не используется
    :rtype: torch.optim.Optimizer
    """
    if name == 'sgd':
        return torch.optim.SGD(model.module.parameters(), lr=lr, momentum=momentum, weight_decay=weight_decay)
    if name == 'adam':
        return torch.optim.Adam(model.module.parameters(), lr=lr)
    raise ValueError(f'Unknown optimizer "{name}"')


def build_scheduler(optimizer, factor, patience):
    """
    Уменьшение learning rate на плато метрики валидации (режим max)
    """
    return torch.optim.lr_scheduler.ReduceLROnPlateau(optimizer, mode='max', factor=factor, patience=patience)


def current_lr(optimizer):
    return optimizer.param_groups[0]['lr']


def set_lr(optimizer, lr):
    for group in optimizer.param_groups:
        group['lr'] = lr
