# Generated by Django 5.0.1 on 2026-10-17 14:40

from django.db import migrations, models


class Migration(migrations.Migration):

    dependencies = [
        ('vqccs', '0001_initial'),
    ]

    operations = [
        migrations.AlterField(
            model_name='experimentrun',
            name='seed',
            field=models.CharField(blank=True, help_text='Scenario seed (unsigned 64-bit)', max_length=20),
        ),
    ]
